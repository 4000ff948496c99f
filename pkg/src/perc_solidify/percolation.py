"""Bernoulli site/bond configurations, cluster labels and seed events.

Occupancy for the site model is a boolean array of the window shape.  For
the bond model it has an extra leading axis of length ``dim``: plane ``k``
holds the edge from a site to its ``+e_k`` neighbour (always closed on the
top face of axis ``k``).
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import rng
from .errors import DomainError, UsageError
from .lattice import Window

MAGIC = b"PERC1"
FORMAT_VERSION = 1
MODELS = ("site", "bond")


@dataclass(frozen=True, eq=False)
class PercConfig:
    window: Window
    model: str
    p: float | None  # None for hand-built configurations
    seed: int
    occupancy: np.ndarray

    def __post_init__(self):
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}")
        if self.p is not None and not 0.0 < self.p < 1.0:
            raise UsageError("p must lie in (0, 1)")
        want = self.window.shape if self.model == "site" else (self.window.dim,) + self.window.shape
        if self.occupancy.shape != want or self.occupancy.dtype != bool:
            raise UsageError(f"occupancy must be a bool array of shape {want}")
        self.occupancy.setflags(write=False)

    @property
    def dim(self):
        return self.window.dim

    @property
    def side(self):
        return self.window.side

    def open_sites(self):
        """Dense mask of the open vertex set (every site, for bonds)."""
        if self.model == "site":
            return self.occupancy
        return np.ones(self.window.shape, dtype=bool)

    def __eq__(self, other):
        return (
            isinstance(other, PercConfig)
            and self.window == other.window
            and self.model == other.model
            and self.p == other.p
            and self.seed == other.seed
            and np.array_equal(self.occupancy, other.occupancy)
        )


def _edge_top_mask(w: Window, k):
    m = np.ones(w.shape, dtype=bool)
    sl = [slice(None)] * w.dim
    sl[k] = w.side - 1
    m[tuple(sl)] = False
    return m


def generate(model, dim, side, p, seed, origin=None) -> PercConfig:
    """Independent Bernoulli(p) sites or edges from the counter-based hash."""
    if model not in MODELS:
        raise UsageError(f"unknown model {model!r}")
    if dim < 2 or side < 2:
        raise UsageError("need dim >= 2 and side >= 2")
    if not 0.0 < p < 1.0:
        raise UsageError("p must lie in (0, 1)")
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    w = Window(dim, side, origin) if origin is not None else Window(dim, side)
    n = w.size
    if model == "site":
        occ = (rng.uniform_block(seed, rng.SITE, 0, n) < p).reshape(w.shape)
    else:
        occ = np.empty((dim,) + w.shape, dtype=bool)
        for k in range(dim):
            u = rng.uniform_block(seed, rng.BOND, k * n, n).reshape(w.shape)
            occ[k] = (u < p) & _edge_top_mask(w, k)
    return PercConfig(w, model, float(p), int(seed), occ)


def from_occupancy(occupancy, model="site", origin=None, seed=0) -> PercConfig:
    """Hand-built configuration (``p`` is recorded as ``None``)."""
    occ = np.asarray(occupancy, dtype=bool).copy()
    dim = occ.ndim if model == "site" else occ.ndim - 1
    w = Window(dim, occ.shape[-1], origin) if origin is not None else Window(dim, occ.shape[-1])
    if model == "bond":
        for k in range(dim):
            occ[k] &= _edge_top_mask(w, k)
    return PercConfig(w, model, None, seed, occ)


def full_config(dim, side, origin=None) -> PercConfig:
    """All sites open: the full lattice restricted to the window."""
    return from_occupancy(np.ones((side,) * dim, dtype=bool), "site", origin)


# ------------------------------------------------------------- labeling


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    labels: np.ndarray      # window-shaped int32, -1 where not open
    sizes: np.ndarray       # by cluster id
    diameters: np.ndarray   # l1 diameters by cluster id

    @property
    def count(self):
        return len(self.sizes)


def _canonical(raw, open_mask):
    """Relabel so ids follow the smallest flat index of each component."""
    flat = raw.ravel()
    sel = np.flatnonzero(open_mask.ravel())
    if sel.size == 0:
        return np.full(raw.shape, -1, dtype=np.int32), 0
    ids, first = np.unique(flat[sel], return_index=True)
    order = np.argsort(sel[first], kind="stable")
    remap = np.full(int(ids.max()) + 1, -1, dtype=np.int32)
    remap[ids[order]] = np.arange(len(ids), dtype=np.int32)
    out = np.full(flat.shape, -1, dtype=np.int32)
    out[sel] = remap[flat[sel]]
    return out.reshape(raw.shape), len(ids)


def _l1_diameters(labels, count, w: Window):
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    sel = np.flatnonzero(labels.ravel() >= 0)
    lab = labels.ravel()[sel]
    coords = np.stack(np.unravel_index(sel, w.shape), axis=1).astype(np.int64)
    diam = np.zeros(count, dtype=np.int64)
    # l1 diameter = max over sign patterns s of (max s.x - min s.x)
    for signs in itertools.product((1, -1), repeat=w.dim - 1):
        s = np.array((1,) + signs, dtype=np.int64)
        proj = coords @ s
        hi = np.full(count, np.iinfo(np.int64).min)
        lo = np.full(count, np.iinfo(np.int64).max)
        np.maximum.at(hi, lab, proj)
        np.minimum.at(lo, lab, proj)
        diam = np.maximum(diam, hi - lo)
    return diam


def _label_raw(cfg: PercConfig, region=None):
    """Component labels of the open graph restricted to ``region``."""
    w = cfg.window
    mask = cfg.open_sites() if region is None else cfg.open_sites() & region
    if cfg.model == "site":
        structure = ndimage.generate_binary_structure(w.dim, 1)
        raw, _ = ndimage.label(mask, structure=structure)
        return raw, mask
    n = w.size
    idx = np.arange(n).reshape(w.shape)
    rows, cols = [], []
    for k in range(w.dim):
        e = cfg.occupancy[k] & mask
        shifted = np.zeros_like(mask)
        sl_to = [slice(None)] * w.dim
        sl_from = [slice(None)] * w.dim
        sl_to[k] = slice(0, w.side - 1)
        sl_from[k] = slice(1, w.side)
        shifted[tuple(sl_to)] = mask[tuple(sl_from)]
        e &= shifted
        src = idx[e]
        rows.append(src)
        cols.append(src + w.side ** (w.dim - 1 - k))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    adj = coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    return lab.reshape(w.shape) + 1, mask


def label_clusters(cfg: PercConfig) -> ClusterLabeling:
    """Connected components of the open graph with canonical ids."""
    raw, mask = _label_raw(cfg)
    labels, count = _canonical(raw, mask)
    sizes = np.bincount(labels.ravel()[labels.ravel() >= 0], minlength=count).astype(np.int64)
    return ClusterLabeling(labels, sizes, _l1_diameters(labels, count, cfg.window))


def s_r_mask(cfg, labeling: ClusterLabeling, r):
    if r < 0:
        raise DomainError("r must be non-negative")
    good = labeling.diameters >= r
    lab = labeling.labels
    out = np.zeros(lab.shape, dtype=bool)
    sel = lab >= 0
    out[sel] = good[lab[sel]]
    return out


def s_r_vertices(cfg, labeling: ClusterLabeling, r):
    """Open sites whose component has l1-diameter at least ``r``."""
    from .lattice import index_point

    return index_point(cfg.window, np.flatnonzero(s_r_mask(cfg, labeling, r).ravel()))


def _spans(labels, cid, w):
    m = labels == cid
    for ax in range(w.dim):
        lo = np.take(m, 0, axis=ax).any()
        hi = np.take(m, w.side - 1, axis=ax).any()
        if lo and hi:
            return True
    return False


def largest_cluster_id(cfg, labeling: ClusterLabeling, spanning=False):
    if labeling.count == 0:
        raise DomainError("configuration has no open sites")
    # ids already follow minimum vertex index, so argmax breaks ties correctly
    order = np.argsort(-labeling.sizes, kind="stable")
    if not spanning:
        return int(order[0])
    for cid in order:
        if _spans(labeling.labels, cid, cfg.window):
            return int(cid)
    raise DomainError("no spanning cluster")


def largest_cluster(cfg, labeling: ClusterLabeling | None = None, spanning=False):
    """The window's largest cluster as a :class:`ClusterGraph`."""
    from .cluster_graph import ClusterGraph

    if labeling is None:
        labeling = label_clusters(cfg)
    cid = largest_cluster_id(cfg, labeling, spanning)
    return ClusterGraph.from_mask(cfg, labeling.labels == cid)


# ----------------------------------------------------- local statistics


def _subbox(w: Window, lo, hi):
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, w.side - 1)
    return tuple(slice(a, b + 1) for a, b in zip(lo, hi))


def _local_labels(cfg: PercConfig, sl):
    """Labels of the open graph induced on the sub-box ``sl``."""
    if cfg.model == "site":
        structure = ndimage.generate_binary_structure(cfg.dim, 1)
        lab, _ = ndimage.label(cfg.occupancy[sl], structure=structure)
        return lab
    sub = from_occupancy(cfg.occupancy[(slice(None),) + sl], "bond")
    raw, _ = _label_raw(sub)
    return raw


def local_uniqueness_stat(cfg: PercConfig, R, sample_count, seed, labeling=None, detail=False):
    """Empirical frequencies of the two local-uniqueness events.

    Centers ``z`` are drawn uniformly with ``B(z, R)`` inside the window;
    ``B(z, 2R)`` is clipped.  Returns the minimum of the two frequencies,
    or ``(min, f_nonempty, f_connected)`` when ``detail`` is set.
    """
    w = cfg.window
    if 2 * R + 1 > w.side:
        raise DomainError("window too small for B(z, R)")
    if labeling is None:
        labeling = label_clusters(cfg)
    big = s_r_mask(cfg, labeling, R)
    mid = s_r_mask(cfg, labeling, R / 10)
    span = w.side - 2 * R
    u = rng.uniform_block(seed, rng.SAMPLE, 0, sample_count * w.dim).reshape(sample_count, w.dim)
    centers = R + np.floor(u * span).astype(np.int64)
    hit_nonempty = 0
    hit_conn = 0
    for z in centers:
        inner = _subbox(w, z - R, z + R)
        if big[inner].any():
            hit_nonempty += 1
        outer_lo = np.maximum(z - 2 * R, 0)
        outer = _subbox(w, z - 2 * R, z + 2 * R)
        lab = _local_labels(cfg, outer)
        rel = tuple(slice(s.start - o, s.stop - o) for s, o in zip(inner, outer_lo))
        ids = lab[rel][mid[inner]]
        if ids.size == 0 or np.all(ids == ids[0]):
            hit_conn += 1
    f1 = hit_nonempty / sample_count
    f2 = hit_conn / sample_count
    if detail:
        return min(f1, f2), f1, f2
    return min(f1, f2)


# ----------------------------------------------------------- seed events


def eta1(alpha, eta):
    return math.sqrt(1.0 - alpha / 2.0) * eta


def eta2(alpha, eta):
    return (1.0 + alpha / 4.0) * eta


def _cube(w: Window, x, L0):
    rel = np.asarray(x, dtype=np.int64) - w.lo
    if np.any(rel < 0) or np.any(rel + L0 > w.side):
        raise DomainError("seed cube outside window")
    return tuple(slice(a, a + L0) for a in rel)


class SeedEvaluator:
    """Caches S_{L0} and cube components for repeated seed-event queries."""

    def __init__(self, cfg: PercConfig, L0, labeling=None):
        self.cfg = cfg
        self.L0 = L0
        labeling = labeling if labeling is not None else label_clusters(cfg)
        self.s_big = s_r_mask(cfg, labeling, L0)
        self._comp = {}

    def _largest_component(self, y):
        key = tuple(int(c) for c in y)
        if key not in self._comp:
            sl = _cube(self.cfg.window, y, self.L0)
            sub = self.s_big[sl]
            if self.cfg.model == "site":
                structure = ndimage.generate_binary_structure(self.cfg.dim, 1)
                lab, k = ndimage.label(sub, structure=structure)
            else:
                occ = self.cfg.occupancy[(slice(None),) + sl]
                raw, _ = _label_raw(from_occupancy(occ, "bond"), region=sub)
                lab = np.where(sub, raw, 0)
                k = lab.max()
            if k == 0 or not sub.any():
                self._comp[key] = (0, None)
            else:
                sizes = np.bincount(lab.ravel())
                sizes[0] = 0
                best = int(np.argmax(sizes))
                first = np.unravel_index(int(np.flatnonzero(lab.ravel() == best)[0]), sub.shape)
                self._comp[key] = (int(sizes[best]), np.array(first) + [s.start for s in sl])
        return self._comp[key]

    def _connected(self, x, y, px, py):
        w = self.cfg.window
        rel_x = np.asarray(x) - w.lo
        rel_y = np.asarray(y) - w.lo
        lo = np.minimum(rel_x, rel_y)
        hi = np.maximum(rel_x, rel_y) + self.L0
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        lab = _local_labels(self.cfg, sl)
        a = tuple(px - lo)
        b = tuple(py - lo)
        return lab[a] != 0 and lab[a] == lab[b]

    def D_bar(self, x, eta_1):
        """TRUE iff the good pattern around the cube at ``x`` fails."""
        x = np.asarray(x, dtype=np.int64)
        d = self.cfg.dim
        need = eta_1 * self.L0 ** d
        size_x, px = self._largest_component(x)
        if size_x < need:
            return True
        for k in range(d):
            for s in (-1, 1):
                y = x.copy()
                y[k] += s * self.L0
                size_y, py = self._largest_component(y)
                if size_y < need:
                    return True
                if not self._connected(x, y, px, py):
                    return True
        return False

    def I_bar(self, x, eta_2):
        sl = _cube(self.cfg.window, x, self.L0)
        return int(self.s_big[sl].sum()) > eta_2 * self.L0 ** self.cfg.dim


def seed_event_D(cfg, x, L0, eta_1, labeling=None):
    return SeedEvaluator(cfg, L0, labeling).D_bar(x, eta_1)


def seed_event_I(cfg, x, L0, eta_2, labeling=None):
    return SeedEvaluator(cfg, L0, labeling).I_bar(x, eta_2)


def seed_cube_anchors(w: Window, L0):
    """Cube corners on the L0 grid whose 2d neighbour cubes fit too."""
    per = w.side // L0
    ks = range(1, per - 1)
    out = [w.lo + L0 * np.array(k) for k in itertools.product(ks, repeat=w.dim)]
    return np.array(out, dtype=np.int64).reshape(-1, w.dim)


def seed_event_frequencies(cfg, L0, alpha, eta_hat, labeling=None):
    """Frequencies of D̄ and Ī over all admissible cubes of one config."""
    ev = SeedEvaluator(cfg, L0, labeling)
    anchors = seed_cube_anchors(cfg.window, L0)
    if len(anchors) == 0:
        raise DomainError("window holds no cube with all neighbours")
    e1, e2 = eta1(alpha, eta_hat), eta2(alpha, eta_hat)
    d = sum(ev.D_bar(x, e1) for x in anchors)
    i = sum(ev.I_bar(x, e2) for x in anchors)
    return d / len(anchors), i / len(anchors), len(anchors)


@dataclass(frozen=True)
class ProductReport:
    product_lower: float
    threshold: float
    passes: bool
    terms: int


def product_condition_check(r_seq, ell_seq, alpha, eta, dim=3, tail_ratio=None):
    """Lower-bound the infinite product and compare it with the threshold.

    ``tail_ratio`` declares that the omitted terms x_i = (4 r_i / l_i)^d
    decay at least geometrically with that ratio after the prefix; the tail
    then contributes a factor at least ``1 - x_last * q / (1 - q)``.
    """
    r = np.asarray(r_seq, dtype=float)
    ell = np.asarray(ell_seq, dtype=float)
    if r.shape != ell.shape or r.size == 0:
        raise UsageError("r and ell prefixes must be non-empty and equal length")
    x = (4.0 * r / ell) ** dim
    thr = max((1 + eta2(alpha, eta)) / (1 + 2 * eta1(alpha, eta)), math.sqrt(1 - alpha / 2), 1 - alpha / 4 * eta)
    if np.any(4 * r >= ell):
        return ProductReport(0.0, thr, False, len(r))
    prod = float(np.exp(np.sum(np.log1p(-x))))
    if tail_ratio is not None:
        if not 0 <= tail_ratio < 1:
            raise UsageError("tail ratio must be in [0, 1)")
        prod *= max(0.0, 1.0 - x[-1] * tail_ratio / (1 - tail_ratio))
    return ProductReport(prod, thr, bool(prod > thr), len(r))


# -------------------------------------------------------------- file I/O

_HEADER = struct.Struct("<5sBBBQdQ")


def write_config(path, cfg: PercConfig):
    if any(o != 0 for o in cfg.window.origin):
        raise UsageError("only windows anchored at the origin can be written")
    bits = np.packbits(cfg.occupancy.ravel(), bitorder="little")
    p = float("nan") if cfg.p is None else cfg.p
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, MODELS.index(cfg.model), cfg.dim, cfg.side, p, cfg.seed)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(bits.tobytes())


def read_config(path) -> PercConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise UsageError("truncated configuration file")
    magic, ver, model, dim, side, p, seed = _HEADER.unpack_from(data)
    if magic != MAGIC or ver != FORMAT_VERSION or model > 1:
        raise UsageError("not a PERC1 configuration file")
    w = Window(dim, side)
    count = w.size * (dim if model == 1 else 1)
    raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if raw.size != (count + 7) // 8:
        raise UsageError("configuration payload has the wrong length")
    bits = np.unpackbits(raw, count=count, bitorder="little").astype(bool)
    shape = w.shape if model == 0 else (dim,) + w.shape
    return PercConfig(w, MODELS[model], None if math.isnan(p) else p, seed, bits.reshape(shape))
