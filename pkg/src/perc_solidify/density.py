"""Local densities, ball averages and volume regularity on a cluster.

Counts over sup-norm balls for every site at once come from separable
sliding-window sums, so one scale costs O(window) whatever the radius.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .cluster_graph import ClusterGraph
from .errors import DomainError
from .percolation import PercConfig, label_clusters, largest_cluster_id


def box_sums(arr, r):
    """Sum of ``arr`` over B(x, r) clipped to the array, for every x."""
    out = np.asarray(arr)
    out = out.astype(np.int64 if out.dtype.kind in "biu" else np.float64)
    for ax in range(out.ndim):
        n = out.shape[ax]
        csum = np.cumsum(out, axis=ax)
        pad_shape = list(out.shape)
        pad_shape[ax] = 1
        csum = np.concatenate([np.zeros(pad_shape, dtype=out.dtype), csum], axis=ax)
        i = np.arange(n)
        hi = np.minimum(i + r, n - 1) + 1
        lo = np.maximum(i - r, 0)
        out = np.take(csum, hi, axis=ax) - np.take(csum, lo, axis=ax)
    return out


def truncated_mask(shape, r):
    """True where B(x, r) sticks out of an array of ``shape``."""
    m = np.zeros(shape, dtype=bool)
    for ax, n in enumerate(shape):
        i = np.arange(n)
        bad = (i - r < 0) | (i + r > n - 1)
        sh = [1] * len(shape)
        sh[ax] = n
        m |= bad.reshape(sh)
    return m


def scale_radius(ell, variant="sigma"):
    if variant == "sigma":
        return 2 ** ell
    if variant == "sigma_tilde":
        return 4 * 2 ** ell
    raise DomainError(f"unknown variant {variant!r}")


@dataclass(frozen=True, eq=False)
class DensityField:
    scale: int
    variant: str
    values: np.ndarray      # per local id of the graph
    truncated: np.ndarray   # per local id
    U1_id: str = "U1"

    def write_csv(self, path, g: ClusterGraph):
        pts = g.points
        with open(path, "w") as fh:
            fh.write(f"# variant={self.variant} ell={self.scale} U1={self.U1_id}\n")
            cols = " ".join("xyzw"[k] if k < 4 else f"x{k}" for k in range(g.dim))
            fh.write(f"{cols} value truncated\n")
            for p, v, t in zip(pts, self.values, self.truncated):
                fh.write(" ".join(map(str, p)) + f" {v!r} {int(t)}\n")


def _u1_dense(g: ClusterGraph, U1):
    U1 = np.asarray(U1, dtype=bool)
    if U1.shape != (g.n,):
        raise DomainError("U1 must be a boolean mask over the graph's local ids")
    return g.dense_from_vertices(U1, fill=False)


def sigma_from_masks(cluster, u1, ell, variant="sigma"):
    """σ over every site of dense cluster/U1 masks (U1 ⊆ cluster)."""
    r = scale_radius(ell, variant)
    num = box_sums(u1, r)
    den = box_sums(cluster, r)
    vals = np.where(den > 0, num / np.maximum(den, 1), 0.0)
    return vals, truncated_mask(np.shape(cluster), r)


def sigma_dense(g: ClusterGraph, U1, ell, variant="sigma"):
    """Window-shaped σ values for every lattice site, and the truncation mask."""
    return sigma_from_masks(g.mask(), _u1_dense(g, U1), ell, variant)


def sigma_field(g: ClusterGraph, U1, ell, variant="sigma", U1_id="U1") -> DensityField:
    vals, trunc = sigma_dense(g, U1, ell, variant)
    return DensityField(ell, variant, vals.ravel()[g.sites], trunc.ravel()[g.sites], U1_id)


def sigma(g: ClusterGraph, U1, x, ell, variant="sigma"):
    """σ at one lattice point; returns ``(value, truncated)``."""
    r = scale_radius(ell, variant)
    w = g.window
    x = np.asarray(x, dtype=np.int64)
    if not w.contains(x)[0]:
        raise DomainError("point outside window")
    rel = x - w.lo
    sl = tuple(slice(max(c - r, 0), min(c + r + 1, w.side)) for c in rel)
    trunc = any(c - r < 0 or c + r > w.side - 1 for c in rel)
    den = int(g.mask()[sl].sum())
    num = int(_u1_dense(g, U1)[sl].sum())
    return (num / den if den else 0.0), trunc


def ball_average_field(g: ClusterGraph, f, ell):
    """(f)_{x,ℓ} for every graph vertex, with empty/truncated flags."""
    r = 2 ** ell
    f = np.asarray(f, dtype=np.float64)
    tot = box_sums(g.dense_from_vertices(f, fill=0.0), r).ravel()[g.sites]
    cnt = box_sums(g.mask(), r).ravel()[g.sites]
    vals = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
    trunc = truncated_mask(g.window.shape, r).ravel()[g.sites]
    return vals, trunc


def ball_average(g: ClusterGraph, f, x, ell):
    """Mean of ``f`` over B(x, 2^ℓ) ∩ g; 0 with ``empty=True`` if no vertex."""
    r = 2 ** ell
    w = g.window
    x = np.asarray(x, dtype=np.int64)
    rel = x - w.lo
    sl = tuple(slice(max(c - r, 0), min(c + r + 1, w.side)) for c in rel)
    vals = g.dense_from_vertices(np.asarray(f, dtype=np.float64), fill=0.0)[sl]
    cnt = int(g.mask()[sl].sum())
    if cnt == 0:
        return 0.0, True
    return float(vals.sum() / cnt), False


# ---------------------------------------------------------- η and R_den


def estimate_eta(cfgs):
    """Largest-cluster density; mean and 95% normal CI over several configs."""
    if isinstance(cfgs, PercConfig):
        cfgs = [cfgs]
    vals = []
    for cfg in cfgs:
        lab = label_clusters(cfg)
        if lab.count == 0:
            vals.append(0.0)
            continue
        cid = largest_cluster_id(cfg, lab)
        vals.append(lab.sizes[cid] / cfg.window.size)
    vals = np.array(vals)
    eta = float(vals.mean())
    if eta < 0.01:
        warnings.warn("largest cluster below 1% of the window; configuration looks subcritical")
    if len(vals) < 2:
        return eta, (eta, eta)
    half = 1.96 * vals.std(ddof=1) / math.sqrt(len(vals))
    return eta, (eta - half, eta + half)


def cluster_density_dense(g: ClusterGraph, R):
    """|g ∩ B(x,R)| / |B(x,R)| for every site, plus truncation mask."""
    counts = box_sums(g.mask(), R)
    return counts / float((2 * R + 1) ** g.dim), truncated_mask(g.window.shape, R)


def regular_mask(g: ClusterGraph, R, alpha, eta_hat):
    """Sites whose R-ball lies in the window with regular cluster volume."""
    dens, trunc = cluster_density_dense(g, R)
    ok = (dens >= (1 - alpha) * eta_hat) & (dens <= (1 + alpha) * eta_hat)
    return ok & ~trunc


def _probe_box_mask(g: ClusterGraph, probe_box):
    w = g.window
    if probe_box is None:
        return np.ones(w.shape, dtype=bool)
    lo, hi = (np.asarray(b, dtype=np.int64) - w.lo for b in probe_box)
    if np.any(lo < 0) or np.any(hi >= w.side):
        raise DomainError("probe window must lie inside the window")
    m = np.zeros(w.shape, dtype=bool)
    m[tuple(slice(a, b + 1) for a, b in zip(lo, hi))] = True
    return m


def estimate_R_den(g: ClusterGraph, alpha, probe_box=None, eta_hat=None, max_R=None):
    """Smallest dyadic R with regular volume at R, 2R, 4R on the probe box.

    Returns ``None`` when no scale passes before balls stop fitting.
    """
    if eta_hat is None:
        eta_hat = g.n / g.window.size
    probe = _probe_box_mask(g, probe_box) & g.mask()
    if not probe.any():
        return None
    if max_R is None:
        max_R = g.window.side
    R = 1
    while 4 * R <= max_R:
        good = True
        for Rp in (R, 2 * R, 4 * R):
            dens, trunc = cluster_density_dense(g, Rp)
            if np.any(trunc[probe]):
                return None
            d = dens[probe]
            if np.any(d < (1 - alpha) * eta_hat) or np.any(d > (1 + alpha) * eta_hat):
                good = False
                break
        if good:
            return R
        R *= 2
    return None


def volume_concentration_stats(g: ClusterGraph, alpha, R, eta_hat=None, sample_count=None, seed=0):
    """Fraction of cluster centers with full R-balls whose density is irregular."""
    if 4 * R > g.window.side:
        raise DomainError("need R <= side/4")
    if eta_hat is None:
        eta_hat = g.n / g.window.size
    dens, trunc = cluster_density_dense(g, R)
    ids = np.flatnonzero(~trunc.ravel()[g.sites])
    if ids.size == 0:
        raise DomainError("no cluster vertex has a full ball")
    if sample_count is not None and sample_count < ids.size:
        u = rng.uniform_block(seed, rng.SAMPLE, 0, sample_count)
        ids = ids[np.floor(u * ids.size).astype(np.int64)]
    d = dens.ravel()[g.sites[ids]]
    bad = (d < (1 - alpha) * eta_hat) | (d > (1 + alpha) * eta_hat)
    return float(bad.mean())


# -------------------------------------------------------- lemma checks


@dataclass(frozen=True)
class ViolationReport:
    checked: int
    violations: int
    worst_ratio: float   # max observed / allowed (≤ 1 means no violation)


def c_lip(ell, eta_hat):
    return 6.0 * 2.0 ** (-ell) / eta_hat


def c0(dim, eta_hat):
    return 3.0 * dim * 2 ** (dim - 1) / eta_hat


def lipschitz_check(g: ClusterGraph, U1, ell, probe_ids, eta_hat, field=None) -> ViolationReport:
    """|σ_ℓ(x) − σ_ℓ(y)| ≤ c_lip for probe x and each cluster neighbour y."""
    if field is None:
        field = sigma_field(g, U1, ell)
    probe_ids = np.asarray(probe_ids, dtype=np.int64)
    allowed = c_lip(ell, eta_hat)
    nb = g.nbr[probe_ids]
    ok = nb >= 0
    x_vals = np.repeat(field.values[probe_ids][:, None], nb.shape[1], axis=1)
    diffs = np.abs(x_vals - field.values[np.where(ok, nb, 0)])[ok]
    if diffs.size == 0:
        return ViolationReport(0, 0, 0.0)
    return ViolationReport(int(diffs.size), int(np.sum(diffs > allowed)), float(diffs.max() / allowed))


def average_sandwich_check(g: ClusterGraph, U1, ell, ell_p, probe_ids, alpha, eta_hat) -> ViolationReport:
    """(σ_{ℓ'})_{x,ℓ} within the multiplicative/additive bracket around σ_ℓ(x)."""
    if ell <= ell_p:
        raise DomainError("need ell > ell'")
    probe_ids = np.asarray(probe_ids, dtype=np.int64)
    fine = sigma_field(g, U1, ell_p).values
    coarse = sigma_field(g, U1, ell).values[probe_ids]
    avg, _ = ball_average_field(g, fine, ell)
    avg = avg[probe_ids]
    slack = c0(g.dim, eta_hat) * 2.0 ** (ell_p - ell)
    lo = (1 - alpha) / (1 + alpha) * coarse - slack
    hi = (1 + alpha) / (1 - alpha) * coarse + slack
    bad = (avg < lo - 1e-12) | (avg > hi + 1e-12)
    excess = np.maximum(lo - avg, avg - hi)
    worst = float(1.0 + excess.max() / slack) if probe_ids.size else 0.0
    return ViolationReport(int(probe_ids.size), int(bad.sum()), worst)
