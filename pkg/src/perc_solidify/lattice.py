"""Boxes, sup-norm balls and blow-ups on Z^d.

Point sets are ``(n, d)`` integer arrays.  A :class:`Window` is an
axis-aligned cube of ``side**d`` sites whose lowest corner is ``origin``;
sites are indexed row-major with the last axis fastest.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError

_TOL = 1e-9


@dataclass(frozen=True)
class Window:
    dim: int
    side: int
    origin: tuple = field(default=None)

    def __post_init__(self):
        if self.dim < 2:
            raise UsageError("dimension must be at least 2")
        if self.side < 1:
            raise UsageError("side must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", (0,) * self.dim)
        origin = tuple(int(c) for c in self.origin)
        if len(origin) != self.dim:
            raise UsageError("origin has wrong length")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dim, half):
        """Window ``[-half, half]^dim``."""
        return cls(dim, 2 * half + 1, (-half,) * dim)

    @property
    def shape(self):
        return (self.side,) * self.dim

    @property
    def size(self):
        return self.side ** self.dim

    @property
    def lo(self):
        return np.array(self.origin, dtype=np.int64)

    @property
    def hi(self):
        return self.lo + self.side - 1

    def contains(self, pts):
        """Boolean mask of the rows of ``pts`` that lie in the window."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def all_points(self):
        return index_point(self, np.arange(self.size))

    def face_mask(self):
        """Dense boolean array marking sites on the window faces."""
        m = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            m[tuple(sl)] = True
            sl[ax] = self.side - 1
            m[tuple(sl)] = True
        return m


def _as_points(pts, dim):
    a = np.asarray(pts, dtype=np.int64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.shape[1] != dim:
        raise DomainError(f"points must have {dim} coordinates")
    return a


def point_index(w: Window, pts):
    """Row-major index of each point; raises if any point is outside ``w``."""
    a = _as_points(pts, w.dim)
    if not np.all(w.contains(a)):
        raise DomainError("point outside window")
    rel = a - w.lo
    return np.ravel_multi_index(tuple(rel.T), w.shape).astype(np.int64)


def index_point(w: Window, idx):
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= w.size):
        raise DomainError("index outside window")
    coords = np.unravel_index(idx.ravel(), w.shape)
    return np.stack(coords, axis=1).astype(np.int64) + w.lo


def ball_points(center, r, w: Window):
    """B(center, r) in the sup norm, clipped to ``w``."""
    c = _as_points(center, w.dim)[0]
    if not w.contains(c)[0]:
        raise DomainError("ball center outside window")
    if r < 0:
        raise DomainError("negative radius")
    lo = np.maximum(c - r, w.lo)
    hi = np.minimum(c + r, w.hi)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)


def ball_mask(center, r, w: Window):
    """Dense boolean array of B(center, r) ∩ w."""
    m = np.zeros(w.shape, dtype=bool)
    c = np.asarray(center, dtype=np.int64) - w.lo
    sl = tuple(slice(max(ci - r, 0), min(ci + r + 1, w.side)) for ci in c)
    m[sl] = True
    return m


def sup_dist(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b)), axis=-1)


# ---------------------------------------------------------------- shapes


@dataclass(frozen=True)
class Box:
    """Closed axis box ``center ± half`` in continuum units."""
    center: tuple
    half: tuple
    kind = "box"

    def contains(self, x):
        c = np.asarray(self.center, dtype=float)
        h = np.asarray(self.half, dtype=float)
        return np.all(np.abs(x - c) <= h + _TOL, axis=-1)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        h = np.asarray(self.half, dtype=float)
        return c - h, c + h

    def has_interior(self):
        return all(h > 0 for h in self.half)


@dataclass(frozen=True)
class Ball:
    """Closed sup-norm ball, i.e. a cube with equal half-widths."""
    center: tuple
    radius: float
    kind = "ball"

    def contains(self, x):
        c = np.asarray(self.center, dtype=float)
        return np.max(np.abs(x - c), axis=-1) <= self.radius + _TOL

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def has_interior(self):
        return self.radius > 0


@dataclass(frozen=True)
class Union:
    parts: tuple
    kind = "union"

    def contains(self, x):
        out = np.zeros(np.shape(x)[:-1], dtype=bool)
        for p in self.parts:
            out |= p.contains(x)
        return out

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def has_interior(self):
        return bool(self.parts) and any(p.has_interior() for p in self.parts)


ShapeSpec = Box | Ball | Union


def shape_dim(a):
    if isinstance(a, Union):
        return shape_dim(a.parts[0])
    return len(a.center)


def blow_up(a, n: int, w: Window):
    """Lattice points p with p/n in ``a``; n·a must fit inside ``w``."""
    if n < 1:
        raise DomainError("blow-up factor must be at least 1")
    if not a.has_interior():
        raise DomainError("shape has empty interior")
    lo, hi = a.bounds()
    plo = np.ceil(lo * n - _TOL).astype(np.int64)
    phi = np.floor(hi * n + _TOL).astype(np.int64)
    if np.any(plo < w.lo) or np.any(phi > w.hi):
        need = int(2 * max(np.max(np.abs(plo)), np.max(np.abs(phi))) + 1)
        raise DomainError(f"blow-up exceeds window; a centered window needs side >= {need}")
    axes = [np.arange(a_, b_ + 1) for a_, b_ in zip(plo, phi)]
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    keep = a.contains(pts / float(n))
    return pts[keep].astype(np.int64)


def blow_up_mask(a, n, w: Window):
    m = np.zeros(w.shape, dtype=bool)
    pts = blow_up(a, n, w)
    if len(pts):
        m[tuple((pts - w.lo).T)] = True
    return m


# ------------------------------------------------------ text serialization

_TOKEN = re.compile(r"\{|\}|[^\s{}]+")


def parse_shape(text: str):
    """Parse ``box cx.. hx..`` / ``ball cx.. r`` / ``union { ... }`` text."""
    lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
    toks = _TOKEN.findall(" \n ".join(lines).replace("\n", " ; "))
    toks = [t for t in toks if t != ";"]
    pos = 0

    def number():
        nonlocal pos
        try:
            v = float(toks[pos])
        except (IndexError, ValueError):
            raise UsageError(f"expected a number at token {pos}") from None
        pos += 1
        return v

    def numbers():
        nonlocal pos
        vals = []
        while pos < len(toks) and toks[pos] not in ("{", "}", "box", "ball", "union"):
            vals.append(number())
        return vals

    def one():
        nonlocal pos
        if pos >= len(toks):
            raise UsageError("unexpected end of shape text")
        kind = toks[pos]
        pos += 1
        if kind == "box":
            v = numbers()
            if len(v) % 2 or len(v) < 4:
                raise UsageError("box needs d centers and d half-widths")
            d = len(v) // 2
            return Box(tuple(v[:d]), tuple(v[d:]))
        if kind == "ball":
            v = numbers()
            if len(v) < 3:
                raise UsageError("ball needs d centers and a radius")
            return Ball(tuple(v[:-1]), v[-1])
        if kind == "union":
            if pos >= len(toks) or toks[pos] != "{":
                raise UsageError("union must be followed by '{'")
            pos += 1
            parts = []
            while pos < len(toks) and toks[pos] != "}":
                parts.append(one())
            if pos >= len(toks):
                raise UsageError("unterminated union")
            pos += 1
            return Union(tuple(parts))
        raise UsageError(f"unknown shape kind {kind!r}")

    shape = one()
    if pos != len(toks):
        raise UsageError("trailing tokens after shape")
    return shape


def format_shape(a) -> str:
    fmt = lambda xs: " ".join(repr(float(x)) for x in xs)  # noqa: E731
    if isinstance(a, Box):
        return f"box {fmt(a.center)} {fmt(a.half)}"
    if isinstance(a, Ball):
        return f"ball {fmt(a.center)} {float(a.radius)!r}"
    inner = "\n".join("  " + format_shape(p) for p in a.parts)
    return "union {\n" + inner + "\n}"


def neighbor_offsets(dim):
    """The 2d unit offsets, ordered -e_0, +e_0, -e_1, +e_1, ..."""
    out = []
    for k in range(dim):
        for s in (-1, 1):
            e = [0] * dim
            e[k] = s
            out.append(e)
    return np.array(out, dtype=np.int64)


def symmetric_difference_size(r, dim):
    """|B(x,r) Δ B(x+e_1,r)| for balls that fit: two slabs on each side."""
    return 2 * (2 * r + 1) ** (dim - 1)


def cube_corners(dim):
    return list(itertools.product((0, 1), repeat=dim))


def ceil_log2(x) -> int:
    if x <= 1:
        return 0
    return int(math.ceil(math.log2(x) - 1e-12))
