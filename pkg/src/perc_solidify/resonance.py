"""Interface problems, resonance sets and the desk-scale experiments.

Vertex sets are boolean masks over the local ids of the problem's graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rng
from .cluster_graph import ClusterGraph, boundary_relative
from .density import sigma_field, sigma_from_masks, ball_average_field, box_sums
from .errors import DomainError, UsageError
from .lattice import Box, Union, Window, blow_up_mask
from .percolation import from_occupancy, generate, label_clusters, largest_cluster_id
from .potential import DirichletSystem, equilibrium_and_capacity, hit_prob_exact
from .schedule import GrowthPair, alpha_tilde, build_schedule, growth_check, intervals
from .walk import (BUDGET, WINDOW, CascadePlan, StopSpec, cascade_batch,
                   estimate_hit_before, simulate, wilson_interval)


@dataclass
class InterfaceProblem:
    graph: ClusterGraph
    A_N: np.ndarray
    U0: np.ndarray
    U1: np.ndarray
    S: np.ndarray
    Sigma: np.ndarray
    epsilon: int
    chi: float | None
    ell_star: int
    N: int
    b_N: float
    schedule: object = None
    replication: tuple = (1000, 0)
    meta: dict = field(default_factory=dict)

    @property
    def window_kill(self):
        return self.graph.on_window_face()


# --------------------------------------------------------------- fixtures


def _dilate(mask, r):
    if r <= 0:
        return mask.copy()
    return ndimage.maximum_filter(mask.astype(np.uint8), size=2 * r + 1, mode="constant") > 0


def default_shape(kind, dim=3):
    if kind == "two_box_nonconvex":
        h = (0.1,) * dim
        return Union((Box((-0.3,) + (0.0,) * (dim - 1), h), Box((0.3,) + (0.0,) * (dim - 1), h)))
    return Box((0.0,) * dim, (0.25,) * dim)


def build_standard_problem(kind, N, *, p=0.75, seed=0, dim=3, model="site", A=None,
                           ell_star=None, epsilon=4, thickness=2, hole_fraction=None,
                           window_half=None, full_lattice=False, b_N=None, J=1,
                           replicas=1000) -> InterfaceProblem:
    """Build a named fixture around A_N on a window-sized percolation cluster.

    The shell holds the sites at sup distance 2^{ℓ*}−thickness+1 .. 2^{ℓ*}
    from A_N, and U₀ is the cluster strictly inside it, so the outer radius
    of the fixture scales exactly with N.  Σ is the cluster part of the
    shell minus pseudo-random holes keyed to ``seed``.
    """
    if kind not in ("solid_shell", "perforated_shell", "two_box_nonconvex"):
        raise UsageError(f"unknown problem kind {kind!r}")
    if hole_fraction is None:
        hole_fraction = 0.5 if kind == "perforated_shell" else 0.0
    if not 0 <= hole_fraction <= 1:
        raise UsageError("hole fraction must be in [0, 1]")
    A = default_shape(kind, dim) if A is None else A
    if ell_star is None:
        ell_star = max(0, int(math.floor(math.log2(max(N / 4, 1)))))
    gap = 2 ** ell_star
    lo, hi = A.bounds()
    reach = int(math.ceil(max(np.abs(lo).max(), np.abs(hi).max()) * N)) + gap
    if window_half is None:
        window_half = reach + gap
    if window_half < reach + gap:
        raise DomainError(f"geometry needs window half-side >= {reach + gap}")
    w = Window.centered(dim, window_half)
    if full_lattice:
        g = ClusterGraph.full(w)
    else:
        cfg = generate(model, dim, w.side, p, seed, origin=w.origin)
        lab = label_clusters(cfg)
        g = ClusterGraph.from_mask(cfg, lab.labels == largest_cluster_id(cfg, lab), check_connected=False)
    a_dense = blow_up_mask(A, N, w)
    if thickness >= gap:
        raise DomainError(f"shell thickness {thickness} must be below 2^ell* = {gap}")
    region = _dilate(a_dense, gap - thickness)
    shell = _dilate(a_dense, gap) & ~region
    holes = rng.uniform_block(seed, rng.PERFORATE, 0, w.size).reshape(w.shape) < hole_fraction
    A_N = g.ids_from_mask(a_dense)
    U0 = g.vertex_mask(g.ids_from_mask(region))
    Sigma = g.vertex_mask(g.ids_from_mask(shell & ~holes))
    prob = InterfaceProblem(
        graph=g, A_N=g.vertex_mask(A_N), U0=U0, U1=~U0, S=boundary_relative(U0, g),
        Sigma=Sigma, epsilon=epsilon, chi=None, ell_star=ell_star, N=N,
        b_N=float(window_half if b_N is None else b_N),
        replication=(replicas, seed),
        meta={"kind": kind, "p": None if full_lattice else p, "seed": seed,
              "hole_fraction": hole_fraction, "thickness": thickness,
              "window_side": w.side, "model": "full" if full_lattice else model},
    )
    eta = g.n / w.size
    prob.schedule = build_schedule(J, dim, eta, ell_star=ell_star, I=1, L=1)
    return prob


# ------------------------------------------------------------ memberships


def class_U_membership(problem: InterfaceProblem):
    """σ_ℓ ≤ ½ on A_N for ℓ ≤ ℓ* and U₀ ⊆ B(0, b_N); returns (ok, witness)."""
    g = problem.graph
    ids = np.flatnonzero(problem.A_N)
    for ell in range(problem.ell_star + 1):
        f = sigma_field(g, problem.U1, ell)
        bad = ids[f.values[ids] > 0.5]
        if bad.size:
            return False, {"x": tuple(int(c) for c in g.points[bad[0]]), "ell": ell}
    pts = g.points[problem.U0]
    if pts.size and np.abs(pts).max() > problem.b_N:
        far = pts[np.argmax(np.abs(pts).max(axis=1))]
        return False, {"x": tuple(int(c) for c in far), "b_N": problem.b_N}
    return True, None


def _local_ball_hit(g: ClusterGraph, x_id, target, eps):
    """Exact P_x[H_target < τ_eps] by a dense solve on B(x, eps−1) ∩ g."""
    if target[x_id]:
        return 1.0
    w = g.window
    rel = g.points[x_id] - w.lo
    r = eps - 1
    sl = tuple(slice(max(c - r, 0), min(c + r + 1, w.side)) for c in rel)
    dom = g.local.reshape(w.shape)[sl].ravel()
    dom = dom[dom >= 0]
    free = dom[~target[dom]]
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[free] = np.arange(free.size)
    in_dom = np.zeros(g.n, dtype=bool)
    in_dom[dom] = True
    nb = g.nbr[free]
    valid = nb >= 0
    nbc = np.where(valid, nb, 0)
    M = np.diag(g.mu[free].astype(float))
    rows, cols = np.nonzero(valid & (pos[nbc] >= 0))
    np.subtract.at(M, (rows, pos[nbc[rows, cols]]), 1.0)
    b = (valid & in_dom[nbc] & target[nbc]).sum(axis=1).astype(float)
    h = np.linalg.solve(M, b)
    return float(h[pos[x_id]])


def interface_membership(problem: InterfaceProblem, chi=None, method="exact", replicas=2000, seed=0):
    """min over x ∈ S of P_x[H_Σ < τ_ε]; returns (ok, chi_hat, worst_x, values)."""
    g = problem.graph
    S = np.flatnonzero(problem.S)
    if S.size == 0:
        return True, 1.0, None, np.zeros(0)
    if method == "exact":
        vals = np.array([_local_ball_hit(g, x, problem.Sigma, problem.epsilon) for x in S])
    elif method == "mc":
        vals = np.array([
            estimate_hit_before(g, g.points[x], problem.Sigma, ("radius", problem.epsilon),
                                replicas, seed + i).p_hat
            for i, x in enumerate(S)
        ])
    else:
        raise UsageError(f"unknown method {method!r}")
    k = int(np.argmin(vals))
    chi_hat = float(vals[k])
    target = problem.chi if chi is None else chi
    ok = True if target is None else chi_hat >= target
    return ok, chi_hat, tuple(int(c) for c in g.points[S[k]]), vals


# ------------------------------------------------------------ resonance


def sigma_tilde_fields(g: ClusterGraph, U1, scales):
    return {ell: sigma_field(g, U1, ell, "sigma_tilde") for ell in scales}


def resonance_set(g: ClusterGraph, U1, A_star, J, dim=None, fields=None):
    """{x : #{ℓ ∈ 𝒜* : σ̃_ℓ(x) ∈ [α̃, 1−α̃]} ≥ J} as a local-id mask."""
    if not A_star:
        raise DomainError("scale set is empty")
    at = float(alpha_tilde(dim or g.dim))
    if fields is None:
        fields = sigma_tilde_fields(g, U1, A_star)
    count = np.zeros(g.n, dtype=np.int64)
    for ell in A_star:
        if ell not in fields:
            raise DomainError(f"missing σ̃ field at scale {ell}")
        v = fields[ell].values
        count += (v >= at) & (v <= 1 - at)
    return count >= J


def sample_starts(g: ClusterGraph, mask, limit=10**4, per_octant=None):
    """All ids of ``mask`` if at most ``limit``, else evenly spaced per octant."""
    ids = np.flatnonzero(mask)
    if ids.size <= limit and per_octant is None:
        return ids
    k = per_octant or max(1, limit // 2 ** g.dim)
    pts = g.points[ids]
    octant = ((pts >= 0).astype(np.int64) * (2 ** np.arange(g.dim))).sum(axis=1)
    out = []
    for o in range(2 ** g.dim):
        sel = ids[octant == o]
        if sel.size:
            pick = np.unique(np.linspace(0, sel.size - 1, min(k, sel.size)).round().astype(np.int64))
            out.append(sel[pick])
    return np.sort(np.concatenate(out)) if out else ids[:0]


@dataclass
class EscapeEstimate:
    starts: np.ndarray
    upper: np.ndarray      # escapes (and budget) counted as never hitting
    lower: np.ndarray      # escapes counted as hitting
    replicas: int

    @property
    def sup_upper(self):
        return float(self.upper.max()) if self.upper.size else float("nan")

    @property
    def sup_lower(self):
        return float(self.lower.max()) if self.lower.size else float("nan")


def _escape_mc(g, target, starts, replicas, seed, step_budget=10**6, threads=None):
    spec = StopSpec(targets=[("target", target)], window_kill=True, step_budget=step_budget)
    n = starts.size
    rids = (np.arange(n * replicas, dtype=np.uint64))
    out = simulate(g, np.repeat(starts, replicas), spec, seed, rids, threads=threads)
    esc = out.fired(WINDOW).reshape(n, replicas).mean(axis=1)
    bud = out.fired(BUDGET).reshape(n, replicas).mean(axis=1)
    return EscapeEstimate(starts, esc + bud, bud, replicas)


def estimate_Phi(problem: InterfaceProblem, res_mask, replicas, seed, limit=64, threads=None):
    """P_x[never hits Res] per sampled start, with both censoring bounds."""
    g = problem.graph
    starts = sample_starts(g, problem.A_N, limit)
    if not res_mask.any():
        ones = np.ones(starts.size)
        return EscapeEstimate(starts, ones, ones, replicas)
    return _escape_mc(g, res_mask, starts, replicas, seed, threads=threads)


# ------------------------------------------------------- experiments


def one_step_experiment(g: ClusterGraph, U1, ell, ell_p, delta, probes, replicas, seed,
                        sigma_fine=None, threads=None):
    """Empirical c₁(δ): min over probes of P_x[H_target < τ_{2^ℓ}]."""
    fine = sigma_field(g, U1, ell_p).values if sigma_fine is None else sigma_fine
    avg, trunc = ball_average_field(g, fine, ell)
    rows = []
    skipped = 0
    for i, x in enumerate(np.asarray(probes, dtype=np.int64)):
        beta = avg[x]
        if trunc[x] or delta > min(beta, 1 - beta, 0.25):
            skipped += 1
            continue
        target = (fine >= beta - delta) & (fine <= beta + delta)
        est = estimate_hit_before(g, g.points[x], target, ("radius", 2 ** ell), replicas,
                                  seed + i, threads=threads)
        rows.append((int(x), float(beta), est.p_hat, est.ci))
    if not rows:
        raise DomainError("every probe violated the precondition")
    k = int(np.argmin([r[2] for r in rows]))
    return {"min": rows[k][2], "ci": rows[k][3], "argmin": rows[k][0], "rows": rows,
            "skipped": skipped, "replicas": replicas}


def cascade_plan_from_fields(scales, J, sigma_vals, sigma_tilde_vals, dim):
    """Entrance masks {σ_{ℓ_j} ∈ I_j} using the intervals of schedule ``J``."""
    ivs = intervals(J)
    if len(scales) > len(ivs):
        raise DomainError("more cascade scales than intervals")
    targets = []
    for j, ell in enumerate(scales):
        lo, hi = float(ivs[j][0]), float(ivs[j][1])
        v = sigma_vals[ell]
        targets.append((v >= lo) & (v <= hi))
    return CascadePlan(list(scales), targets, [sigma_tilde_vals[l] for l in scales],
                       float(alpha_tilde(dim)))


def cascade_experiment(g: ClusterGraph, plan: CascadePlan, probes, replicas, seed):
    """Run the cascade from each probe; P̂[𝒞] and conclusion violations."""
    probes = [int(p) for p in probes if plan.targets[0][p]]
    if not probes:
        raise DomainError("no probe satisfies the hypothesis")
    succ = 0
    ext_bad = sig_bad = 0
    total = 0
    for i, x in enumerate(probes):
        rids = np.arange(i * replicas, (i + 1) * replicas, dtype=np.uint64)
        b = cascade_batch(g, x, plan, seed, rids)
        succ += int(b.success.sum())
        total += replicas
        ext_bad += b.extent_violations(plan.scales)
        sig_bad += b.sigma_violations(plan.alpha_tilde)
    lo, hi = wilson_interval(succ, total)
    return {"success_rate": succ / total, "ci": (lo, hi), "successes": succ, "trials": total,
            "extent_violations": ext_bad, "sigma_violations": sig_bad, "probes": len(probes)}


def hit_sigma_experiment(g: ClusterGraph, Sigma, x0s, ell, radius_factor=5):
    """Exact min of P_y[H_Σ < T_{B(x₀, 5·2^ℓ)}] over y within 2^ℓ/4 of x₀."""
    mins = []
    for x0 in x0s:
        c = g.points[x0]
        d = np.max(np.abs(g.points - c), axis=1)
        inside = d <= radius_factor * 2 ** ell
        killed = ~inside | g.on_window_face()
        sys = DirichletSystem(g, killed)
        h = hit_prob_exact(sys, Sigma & ~killed)
        near = d <= 2 ** ell / 4
        mins.append(float(h[near].min()))
    return min(mins), mins


def absorption_experiment(problems, replicas, seed, growth: GrowthPair, c_N, a_N, b_N,
                          limit=64, chi_min=None, threads=None):
    """Escape-before-Σ sweep over a size family; rejects constraint violations."""
    rep = growth_check(growth)
    if not rep.ok:
        raise DomainError("growth condition fails: " + "; ".join(c[0] for c in rep.failed()))
    rows = []
    for pr in problems:
        N = pr.N
        scale = 2 ** pr.ell_star
        if pr.epsilon / scale > c_N(N):
            raise DomainError(f"N={N}: eps/2^ell* = {pr.epsilon / scale} exceeds c_N = {c_N(N)}")
        if not a_N(N) <= scale <= b_N(N):
            raise DomainError(f"N={N}: a_N <= 2^ell* <= b_N fails ({a_N(N)}, {scale}, {b_N(N)})")
        in_U, witness = class_U_membership(pr)
        ok_chi, chi_hat, worst, _ = interface_membership(pr)
        g = pr.graph
        starts = sample_starts(g, pr.A_N, limit)
        mc = _escape_mc(g, pr.Sigma, starts, replicas, seed, threads=threads)
        sys = DirichletSystem.window_killed(g)
        h = hit_prob_exact(sys, pr.Sigma & sys.interior)
        rows.append({
            "N": N, "ell_star": pr.ell_star, "epsilon": pr.epsilon, "window_side": g.window.side,
            "class_U": in_U, "class_U_witness": witness, "chi_hat": chi_hat,
            "chi_ok": chi_min is None or chi_hat >= chi_min, "worst_S": worst,
            "starts": int(starts.size), "replicas": replicas,
            "sup_escape_upper": mc.sup_upper, "sup_escape_lower": mc.sup_lower,
            "sup_escape_exact_sample": float((1 - h[starts]).max()),
            "sup_escape_exact_all": float((1 - h[pr.A_N]).max()),
        })
    return rows


def capacity_ratio(problem: InterfaceProblem):
    """cap(Σ)/cap(A_N ∩ g) and the chained finite-volume bound."""
    g = problem.graph
    sys = DirichletSystem.window_killed(g)
    Ap = problem.A_N & sys.interior
    Sig = problem.Sigma & sys.interior
    eq_S = equilibrium_and_capacity(sys, Sig)
    eq_A = equilibrium_and_capacity(sys, Ap)
    min_h = float(eq_S.h_A[Ap].min())
    pairing = float(eq_A.e_A @ eq_S.h_A)   # Σ_y e_A'(y) h_Σ(y) ≤ cap(Σ)
    return {
        "cap_Sigma": eq_S.capacity, "cap_A": eq_A.capacity,
        "ratio": eq_S.capacity / eq_A.capacity,
        "min_hit": min_h, "pairing": pairing,
        "chained_slack": eq_S.capacity - min_h * eq_A.capacity,
        "pairing_slack": eq_S.capacity - pairing,
        "residuals": (eq_S.residual, eq_A.residual),
    }


# ----------------------------------------------------- half-space fixture


@dataclass
class HalfSpaceFixture:
    """U₁ = cluster ∩ {y : n·y ≥ c}; fields use a larger density window.

    ``cluster`` is the dense cluster mask over ``density_window`` (all True
    on the full lattice).  The walk graph is its restriction to the inner
    window, which is enough for walks killed before the inner window face.
    """
    graph: ClusterGraph
    U1: np.ndarray
    normal: tuple
    offset: float
    density_window: Window
    cluster: np.ndarray

    def dense_u1(self, w: Window):
        pts = w.all_points().astype(float)
        return (pts @ np.asarray(self.normal) >= self.offset).reshape(w.shape)

    def fields(self, scales, variant="sigma"):
        """σ (or σ̃) over the graph vertices, from the density window."""
        dw = self.density_window
        u1 = self.dense_u1(dw) & self.cluster
        out = {}
        rel = self.graph.points - dw.lo
        for ell in scales:
            vals, trunc = sigma_from_masks(self.cluster, u1, ell, variant)
            if np.any(trunc[tuple(rel.T)]):
                raise DomainError(f"density window too small for scale {ell} ({variant})")
            out[ell] = vals[tuple(rel.T)]
        return out


def half_space_fixture(walk_half, density_half, dim=3, normal=None, offset=0.5, p=None, seed=0):
    """Tilted half-space on the full lattice, or on a site cluster when ``p`` is set."""
    if normal is None:
        normal = (1.0, 0.31830988618379, 0.1415926535897)[:dim]
    if density_half < walk_half:
        raise UsageError("density window must contain the walk window")
    dw = Window.centered(dim, density_half)
    ww = Window.centered(dim, walk_half)
    if p is None:
        cluster = np.ones(dw.shape, dtype=bool)
        g = ClusterGraph.full(ww)
    else:
        cfg = generate("site", dim, dw.side, p, seed, origin=dw.origin)
        lab = label_clusters(cfg)
        cluster = lab.labels == largest_cluster_id(cfg, lab)
        k = density_half - walk_half
        sub = cluster[(slice(k, k + ww.side),) * dim]
        g = ClusterGraph.from_mask(from_occupancy(sub, "site", ww.origin, seed), sub,
                                   check_connected=False)
    U1 = g.points.astype(float) @ np.asarray(normal) >= offset
    return HalfSpaceFixture(g, U1, tuple(normal), offset, dw, cluster)
