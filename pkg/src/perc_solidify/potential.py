"""Finite-volume potential theory on a cluster graph.

The operator throughout is ``L = D - A`` (degree minus adjacency) on the
non-killed vertices.  With unit-rate holding times its inverse is the Green
function normalised per unit weight, g = L^{-1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pyamg
from scipy import sparse
from scipy.sparse.linalg import cg
from scipy.special import gammaln

from .cluster_graph import ClusterGraph
from .errors import CapacityError, DomainError, StructuralError

DENSE_CAP = 4000
SPARSE_CAP = 10**6
RESIDUAL_TOL = 1e-12


class DirichletSystem:
    """A cluster graph with an absorbing (killed) vertex set.

    ``killed`` is a boolean mask over local ids.  Vertices outside the
    window are implicitly absent, so a walk on the window graph can only be
    absorbed through ``killed``.
    """

    def __init__(self, graph: ClusterGraph, killed):
        self.graph = graph
        killed = np.asarray(killed, dtype=bool)
        if killed.shape != (graph.n,):
            raise DomainError("killed must be a mask over the graph's vertices")
        self.killed = killed
        self.interior = ~killed
        self.sparse_cap = SPARSE_CAP
        if np.any(graph.mu[self.interior] == 0):
            raise StructuralError("isolated interior vertex")
        self._lap = None

    @classmethod
    def window_killed(cls, graph: ClusterGraph):
        """Absorb on the faces of the window."""
        return cls(graph, graph.on_window_face())

    def laplacian(self):
        """Sparse D - A over all vertices (csr)."""
        if self._lap is None:
            adj = self.graph.adjacency()
            self._lap = (sparse.diags(self.graph.mu.astype(float)) - adj).tocsr()
        return self._lap

    def apply(self, v):
        """Matrix-free (D - A) v using the neighbour table."""
        g = self.graph
        v = np.asarray(v, dtype=float)
        nb = g.nbr
        vals = np.where(nb >= 0, v[np.where(nb >= 0, nb, 0)], 0.0)
        return g.mu * v - vals.sum(axis=1)


def _solve_spd(M, b, cap, label="system"):
    """Solve the SPD system M x = b; dense below DENSE_CAP, AMG-CG above."""
    n = M.shape[0]
    if n == 0:
        return np.zeros(0), 0.0
    if n > cap:
        raise CapacityError(f"{label} has {n} unknowns, above the exact cap {cap}; use Monte Carlo")
    bmat = b if b.ndim == 2 else b[:, None]
    if n <= DENSE_CAP:
        x = np.linalg.solve(M.toarray(), bmat)
    else:
        # local weighting: the default spectral-radius estimate starts from a random vector
        ml = pyamg.smoothed_aggregation_solver(M.tocsr(), symmetry="symmetric", max_coarse=500,
                                               smooth=("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"}))
        prec = ml.aspreconditioner(cycle="V")
        cols = []
        for j in range(bmat.shape[1]):
            rhs = bmat[:, j]
            scale = max(1.0, float(np.abs(rhs).max()))
            xj = np.zeros(n)
            for _ in range(6):
                r = rhs - M @ xj
                if np.abs(r).max() <= RESIDUAL_TOL * scale * 0.1:
                    break
                dx, _info = cg(M, r, rtol=1e-14, atol=0.0, M=prec, maxiter=2000)
                xj = xj + dx
            cols.append(xj)
        x = np.stack(cols, axis=1)
    res = float(np.abs(M @ x - bmat).max()) / max(1.0, float(np.abs(bmat).max()))
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise StructuralError(f"{label} residual {res:.3e} above tolerance")
    return (x if b.ndim == 2 else x[:, 0]), res


def hit_prob_exact(sys: DirichletSystem, A, return_residual=False):
    """P_x[H_A < H_killed] for every vertex (1 on A, 0 on killed)."""
    A = np.asarray(A, dtype=bool)
    if np.any(A & sys.killed):
        raise DomainError("A intersects the killed set")
    h = np.zeros(sys.graph.n)
    h[A] = 1.0
    if not A.any():
        return (h, 0.0) if return_residual else h
    free = sys.interior & ~A
    fi = np.flatnonzero(free)
    L = sys.laplacian()
    Lff = L[fi][:, fi]
    b = -(L[fi][:, np.flatnonzero(A)] @ np.ones(int(A.sum())))
    x, res = _solve_spd(Lff, b, sys.sparse_cap, "hitting system")
    h[fi] = x
    return (h, res) if return_residual else h


def green_exact(sys: DirichletSystem):
    """Dense Green matrix on the interior, indexed by ``np.flatnonzero(sys.interior)``."""
    if not sys.killed.any():
        raise DomainError("no killed vertices: the finite walk is recurrent")
    ii = np.flatnonzero(sys.interior)
    if ii.size > DENSE_CAP:
        raise CapacityError("Green matrix above the dense cap; use green_column")
    L = sys.laplacian()[ii][:, ii].toarray()
    return np.linalg.inv(L), ii


def green_column(sys: DirichletSystem, y):
    """g(·, y) as a full-length vector (0 on killed vertices)."""
    if not sys.killed.any():
        raise DomainError("no killed vertices: the finite walk is recurrent")
    ii = np.flatnonzero(sys.interior)
    pos = np.searchsorted(ii, y)
    if pos >= ii.size or ii[pos] != y:
        raise DomainError("y must be an interior vertex")
    b = np.zeros(ii.size)
    b[pos] = 1.0
    x, _ = _solve_spd(sys.laplacian()[ii][:, ii], b, sys.sparse_cap, "Green system")
    out = np.zeros(sys.graph.n)
    out[ii] = x
    return out


@dataclass(frozen=True)
class EquilibriumResult:
    e_A: np.ndarray      # over local ids, zero off A
    capacity: float
    h_A: np.ndarray      # hitting probability of A before killing
    residual: float


def equilibrium_and_capacity(sys: DirichletSystem, A) -> EquilibriumResult:
    """e_A(x) = μ_x P_x[no return to A before killing]; cap = Σ e_A."""
    A = np.asarray(A, dtype=bool)
    if not A.any():
        raise DomainError("A must be non-empty")
    if np.any(A & sys.killed):
        raise DomainError("A touches the killed set")
    h, res = hit_prob_exact(sys, A, return_residual=True)
    g = sys.graph
    nb = g.nbr
    # escape mass through each edge leaving x: 1 - h(y) summed over neighbours
    miss = np.where(nb >= 0, 1.0 - h[np.where(nb >= 0, nb, 0)], 0.0).sum(axis=1)
    e = np.where(A, miss, 0.0)
    return EquilibriumResult(e, float(e.sum()), h, res)


def last_exit_residual(sys: DirichletSystem, A, eq: EquilibriumResult | None = None, green=None):
    """max_x |P_x[H_A < kill] − Σ_y g(x,y) e_A(y)| over interior x."""
    if eq is None:
        eq = equilibrium_and_capacity(sys, A)
    if green is None:
        green = green_exact(sys)
    G, ii = green
    pred = G @ eq.e_A[ii]
    return float(np.abs(pred - eq.h_A[ii]).max())


# ---------------------------------------------------------- heat kernels


def poisson_cutoff(t, tol=1e-12):
    """Smallest N with a Chernoff bound P[Poisson(t) > N] <= tol."""
    if t == 0:
        return 0
    n = max(int(math.ceil(t)), 1)
    while True:
        m = n + 1
        # P[X >= m] <= exp(-t) (e t / m)^m for m > t
        logb = -t + m * (1.0 + math.log(t) - math.log(m))
        if m > t and logb <= math.log(tol):
            return n
        n += 1 if n < 64 else max(1, int(math.sqrt(t)))


def _poisson_weights(t, N):
    if t == 0:
        return np.array([1.0])
    k = np.arange(N + 1)
    return np.exp(-t + k * math.log(t) - gammaln(k + 1))


def _transition(g: ClusterGraph, keep=None):
    """Sparse P^T (column-stochastic), optionally restricted to ``keep``."""
    adj = g.adjacency()
    P = sparse.diags(1.0 / np.maximum(g.mu, 1)) @ adj
    if keep is not None:
        mk = sparse.diags(keep.astype(float))
        P = mk @ P @ mk
    return P.T.tocsr()


def _kernel_rows(g, t, x_ids, keep, tol):
    if t < 0:
        raise DomainError("t must be non-negative")
    PT = _transition(g, keep)
    N = poisson_cutoff(t, tol)
    w = _poisson_weights(t, N)
    v = np.zeros((g.n, len(x_ids)))
    v[x_ids, np.arange(len(x_ids))] = 1.0
    acc = w[0] * v
    for k in range(1, N + 1):
        v = PT @ v
        if w[k] > 0:
            acc += w[k] * v
    return (acc / g.mu[:, None]).T


def heat_kernel(g: ClusterGraph, t, x, tol=1e-12):
    """y -> q_t(x, y) as a vector over local ids."""
    if g.n > SPARSE_CAP:
        raise CapacityError("graph too large for exact kernels; use Monte Carlo")
    return _kernel_rows(g, t, [g.id_of(x)], None, tol)[0]


def killed_heat_kernel(g: ClusterGraph, U, t, x, tol=1e-12):
    """y -> q_{t,U}(x, y) for the walk absorbed on leaving ``U``."""
    U = np.asarray(U, dtype=bool)
    xi = g.id_of(x)
    if not U[xi]:
        raise DomainError("x must lie in U")
    if g.n > SPARSE_CAP:
        raise CapacityError("graph too large for exact kernels; use Monte Carlo")
    return _kernel_rows(g, t, [xi], U, tol)[0]


def heat_kernel_matrix(g: ClusterGraph, t, U=None, tol=1e-12):
    """Full matrix q_t(x, y) (or killed on leaving U) for small graphs."""
    if g.n > DENSE_CAP:
        raise CapacityError("kernel matrix above the dense cap")
    keep = None if U is None else np.asarray(U, dtype=bool)
    return _kernel_rows(g, t, np.arange(g.n), keep, tol)


# ------------------------------------------------------- envelope fits


@dataclass(frozen=True)
class EnvelopeFit:
    c1: float
    c2: float
    c3: float
    c4: float
    upper_violations: int
    lower_violations: int
    samples: int
    rms_residual: float


def gaussian_envelope_fit(t, r1, q, dim) -> EnvelopeFit:
    """Fit log q ≈ log c − (d/2) log t − c' r²/t and shift to envelopes.

    Upper envelope c3 t^{-d/2} exp(-c4 r²/t), lower c1 t^{-d/2} exp(-c2 r²/t).
    The exponent comes from least squares; prefactors are the extreme
    shifts, so violations count numerical slips only.
    """
    t = np.asarray(t, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    q = np.asarray(q, dtype=float)
    if t.size < 3 or np.unique(np.round(r1 ** 2 / t, 12)).size < 2:
        raise DomainError("need at least 3 samples with distinct r^2/t")
    if np.any(q <= 0):
        raise DomainError("kernel samples must be positive")
    y = np.log(q) + 0.5 * dim * np.log(t)
    s = r1 ** 2 / t
    X = np.stack([np.ones_like(s), -s], axis=1)
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (a - b * s)
    c4 = c2 = float(b)
    c3 = float(np.exp((y + b * s).max()))
    c1 = float(np.exp((y + b * s).min()))
    upper = c3 * t ** (-0.5 * dim) * np.exp(-c4 * s)
    lower = c1 * t ** (-0.5 * dim) * np.exp(-c2 * s)
    uv = int(np.sum(q > upper * (1 + 1e-12)))
    lv = int(np.sum(q < lower * (1 - 1e-12)))
    return EnvelopeFit(c1, c2, c3, c4, uv, lv, int(t.size), float(np.sqrt(np.mean(resid ** 2))))


def write_triples_csv(path, g: ClusterGraph, x, values):
    """CSV rows ``x, y, value`` with points written as space-joined coords."""
    xs = " ".join(map(str, x))
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for p, v in zip(g.points, values):
            fh.write(f"{xs},{' '.join(map(str, p))},{v!r}\n")
