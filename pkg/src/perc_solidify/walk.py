"""Jump chain and constant-speed walk on a cluster graph, with stopping rules.

All replicas advance together as numpy arrays.  The jump at step ``k`` of
replica ``i`` uses ``uniform(key(seed, JUMP, replica_ids[i]), k)``, so a
replica's path depends only on ``(seed, replica_id)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .cluster_graph import ClusterGraph
from .errors import DomainError, UsageError

BUDGET = "budget"
WINDOW = "window"


@dataclass
class StopSpec:
    """Stopping rules, checked in order: targets, exits, radii, window.

    ``targets`` is a list of ``(name, mask)`` pairs or ``(name, mask,
    True)`` for a return-type hit that ignores time 0.  ``exits`` fire when
    the walker is outside their mask.  Radius stops fire once the sup
    distance from the start reaches ``r``.
    """
    targets: list = field(default_factory=list)
    exits: list = field(default_factory=list)
    radius_stops: list = field(default_factory=list)
    step_budget: int = 10**7
    window_kill: bool = False

    def __post_init__(self):
        if self.step_budget < 1:
            raise UsageError("step budget must be at least 1")
        if not (self.targets or self.exits or self.radius_stops or self.window_kill):
            raise UsageError("at least one stopping condition is required")

    def cause_names(self):
        names = [t[0] for t in self.targets] + [e[0] for e in self.exits]
        names += [f"tau_{r}" for r in self.radius_stops]
        return names + [WINDOW, BUDGET]


@dataclass(frozen=True)
class WalkOutcome:
    cause: str
    position: tuple
    jumps: int
    elapsed: float | None
    path_extent: dict


@dataclass
class BatchOutcome:
    causes: list           # names, indexed by cause code
    code: np.ndarray
    position: np.ndarray   # local ids
    jumps: np.ndarray
    elapsed: np.ndarray | None
    extent: np.ndarray     # max sup distance from the start

    def count(self, name):
        return int(np.sum(self.code == self.causes.index(name)))

    def fired(self, name):
        return self.code == self.causes.index(name)


def default_threads():
    env = os.environ.get("PERC_SOLIDIFY_THREADS")
    if env:
        n = int(env)
        return n if n > 0 else (os.cpu_count() or 1)
    return 1


def _run_chunk(g: ClusterGraph, starts, spec: StopSpec, seed, rids, continuous):
    n = len(starts)
    pts = g.points
    names = spec.cause_names()
    code = np.full(n, -1, dtype=np.int16)
    pos = starts.astype(np.int64).copy()
    jumps = np.zeros(n, dtype=np.int64)
    elapsed = np.zeros(n) if continuous else None
    extent = np.zeros(n, dtype=np.int64)
    origin = pts[pos]
    jkey = rng.derive_key(seed, rng.JUMP, rids)
    hkey = rng.derive_key(seed, rng.HOLD, rids) if continuous else None
    face = g.on_window_face() if spec.window_kill else None
    ntarg = len(spec.targets)
    nexit = len(spec.exits)
    nrad = len(spec.radius_stops)
    active = np.arange(n)
    step = 0
    packed = g.packed
    mu = g.mu
    while active.size:
        p = pos[active]
        fire = np.full(active.size, -1, dtype=np.int16)
        # evaluate stops in priority order; first one wins
        for i, t in enumerate(spec.targets):
            if len(t) > 2 and t[2] and step == 0:
                continue
            hit = t[1][p] & (fire < 0)
            fire[hit] = i
        for i, (_, m) in enumerate(spec.exits):
            hit = ~m[p] & (fire < 0)
            fire[hit] = ntarg + i
        if nrad:
            dist = np.max(np.abs(pts[p] - origin[active]), axis=1)
            for i, r in enumerate(spec.radius_stops):
                hit = (dist >= r) & (fire < 0)
                fire[hit] = ntarg + nexit + i
        if face is not None:
            hit = face[p] & (fire < 0)
            fire[hit] = ntarg + nexit + nrad
        if step >= spec.step_budget:
            fire[fire < 0] = ntarg + nexit + nrad + 1
        done = fire >= 0
        code[active[done]] = fire[done]
        active = active[~done]
        if not active.size:
            break
        p = pos[active]
        u = rng.uniform(jkey[active], step)
        if continuous:
            elapsed[active] += -np.log1p(-rng.uniform(hkey[active], step))
        choice = np.minimum((u * mu[p]).astype(np.int64), mu[p] - 1)
        new = packed[p, choice]
        pos[active] = new
        jumps[active] += 1
        d = np.max(np.abs(pts[new] - origin[active]), axis=1)
        extent[active] = np.maximum(extent[active], d)
        step += 1
    return code, pos, jumps, elapsed, extent, names


def simulate(g: ClusterGraph, starts, spec: StopSpec, seed, replica_ids=None,
             continuous=False, threads=None) -> BatchOutcome:
    """Run one walk per entry of ``starts`` (local ids) until a stop fires."""
    starts = np.asarray(starts, dtype=np.int64).ravel()
    if replica_ids is None:
        replica_ids = np.arange(starts.size, dtype=np.uint64)
    rids = np.asarray(replica_ids, dtype=np.uint64).ravel()
    if rids.size != starts.size:
        raise UsageError("one replica id per start is required")
    if starts.size and (starts.min() < 0 or starts.max() >= g.n):
        raise DomainError("start vertex not in graph")
    if np.any(g.mu[starts] == 0):
        raise DomainError("start vertex has no neighbours")
    threads = threads or default_threads()
    chunks = max(1, min(threads, starts.size // 1024 or 1))
    bounds = np.linspace(0, starts.size, chunks + 1).astype(int)
    parts = [(starts[a:b], rids[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    if chunks == 1:
        results = [_run_chunk(g, s, spec, seed, r, continuous) for s, r in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda sr: _run_chunk(g, sr[0], spec, seed, sr[1], continuous), parts))
    code = np.concatenate([r[0] for r in results])
    pos = np.concatenate([r[1] for r in results])
    jumps = np.concatenate([r[2] for r in results])
    elapsed = np.concatenate([r[3] for r in results]) if continuous else None
    extent = np.concatenate([r[4] for r in results])
    return BatchOutcome(spec.cause_names(), code, pos, jumps, elapsed, extent)


def _single(g, x0, spec, seed, replica_id, continuous):
    start = g.id_of(x0)
    out = simulate(g, [start], spec, seed, [replica_id], continuous)
    return WalkOutcome(
        cause=out.causes[out.code[0]],
        position=tuple(int(c) for c in g.points[out.position[0]]),
        jumps=int(out.jumps[0]),
        elapsed=float(out.elapsed[0]) if continuous else None,
        path_extent={"x0": int(out.extent[0])},
    )


def run_jump_chain(g: ClusterGraph, x0, spec: StopSpec, seed, replica_id=0) -> WalkOutcome:
    return _single(g, x0, spec, seed, replica_id, False)


def run_ct_walk(g: ClusterGraph, x0, spec: StopSpec, seed, replica_id=0) -> WalkOutcome:
    return _single(g, x0, spec, seed, replica_id, True)


def positions_at_time(g: ClusterGraph, x0, t, replicas, seed):
    """Positions (local ids) of continuous-time walks at time ``t``."""
    start = g.id_of(x0)
    n = replicas
    rids = np.arange(n, dtype=np.uint64)
    jkey = rng.derive_key(seed, rng.JUMP, rids)
    hkey = rng.derive_key(seed, rng.HOLD, rids)
    pos = np.full(n, start, dtype=np.int64)
    clock = np.zeros(n)
    active = np.arange(n)
    step = 0
    while active.size:
        clock[active] += -np.log1p(-rng.uniform(hkey[active], step))
        moving = clock[active] <= t
        active = active[moving]
        if not active.size:
            break
        p = pos[active]
        u = rng.uniform(jkey[active], step)
        choice = np.minimum((u * g.mu[p]).astype(np.int64), g.mu[p] - 1)
        pos[active] = g.packed[p, choice]
        step += 1
    return pos


# ------------------------------------------------------------ estimators


def wilson_interval(k, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z / den * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class HitEstimate:
    p_hat: float
    ci: tuple
    hits: int
    escapes: int
    replicas: int

    @property
    def optimistic(self):
        """Escapes read as never hitting (equals ``p_hat``)."""
        return self.hits / self.replicas

    @property
    def pessimistic(self):
        """Escapes read as hitting."""
        return (self.hits + self.escapes) / self.replicas


def estimate_hit_before(g: ClusterGraph, x0, target, guard, replicas, seed,
                        z=1.96, threads=None, step_budget=10**7) -> HitEstimate:
    """Monte Carlo P_x0[H_target < guard]; window escape counts as the guard.

    ``guard`` is ``("radius", r)`` or ``("exit", domain)``; the latter fires
    once the walker stands outside ``domain``.
    """
    if replicas < 1:
        raise UsageError("replicas must be positive")
    target = np.asarray(target, dtype=bool)
    kind, val = guard
    spec = StopSpec(targets=[("target", target)], window_kill=True, step_budget=step_budget)
    if kind == "radius":
        spec.radius_stops = [val]
    elif kind == "exit":
        spec.exits = [("exit", np.asarray(val, dtype=bool))]
    else:
        raise UsageError(f"unknown guard {kind!r}")
    start = g.id_of(x0)
    out = simulate(g, np.full(replicas, start), spec, seed, threads=threads)
    hits = out.count("target")
    esc = out.count(WINDOW) + out.count(BUDGET)
    return HitEstimate(hits / replicas, wilson_interval(hits, replicas, z), hits, esc, replicas)


# --------------------------------------------------------------- cascade


@dataclass
class CascadePlan:
    """Scales ℓ_0 > … > ℓ_J with entrance masks {σ_{ℓ_j} ∈ I_j} and σ̃ fields."""
    scales: list
    targets: list          # bool masks over local ids, one per scale
    sigma_tilde: list      # float arrays over local ids, one per scale
    alpha_tilde: float
    step_budget: int = 10**6

    @property
    def J(self):
        return len(self.scales) - 1


@dataclass
class CascadeBatch:
    success: np.ndarray
    gammas: np.ndarray       # jump count at each γ_j (-1 if not reached)
    extents: np.ndarray      # (replicas, J+1) sup distance from X_{γ_j} up to γ_J
    sigma_tilde: np.ndarray  # (replicas, J+1) σ̃_{ℓ_j}(X_{γ_J}), nan on failure
    final: np.ndarray
    failure: np.ndarray      # stage at which the walk failed, -1 on success

    def extent_violations(self, scales):
        bound = 1.5 * 2.0 ** np.asarray(scales)
        ok = self.success
        return int(np.sum(self.extents[ok] > bound[None, :]))

    def sigma_violations(self, alpha_tilde):
        s = self.sigma_tilde[self.success]
        return int(np.sum((s < alpha_tilde) | (s > 1 - alpha_tilde)))


def cascade_batch(g: ClusterGraph, x0_id, plan: CascadePlan, seed, replica_ids) -> CascadeBatch:
    """Simulate the γ-cascade for many replicas started at one vertex.

    Stage ``j`` ends when the walk enters ``plan.targets[j+1]`` strictly
    before leaving the sup-ball of radius 2^{ℓ_j} around X_{γ_j}; a jump
    that does both at once fails, as does reaching the window face.
    """
    rids = np.asarray(replica_ids, dtype=np.uint64).ravel()
    n = rids.size
    J = plan.J
    pts = g.points
    face = g.on_window_face()
    radii = np.array([2 ** s for s in plan.scales], dtype=np.int64)
    targ = np.stack(plan.targets)
    gam = np.full((n, J + 1), -1, dtype=np.int64)
    anchors = np.zeros((n, J + 1, g.dim), dtype=np.int64)
    ext = np.zeros((n, J + 1), dtype=np.int64)
    stage = np.zeros(n, dtype=np.int64)
    failure = np.full(n, -1, dtype=np.int64)
    pos = np.full(n, x0_id, dtype=np.int64)
    jkey = rng.derive_key(seed, rng.JUMP, rids)
    if not targ[0, x0_id]:
        failure[:] = 0
        sig = np.full((n, J + 1), np.nan)
        return CascadeBatch(np.zeros(n, bool), gam, ext, sig, pos, failure)
    gam[:, 0] = 0
    anchors[:, 0] = pts[x0_id]
    active = np.arange(n)

    def advance(idx, step):
        # promote walkers whose current vertex lies in the next target, repeatedly
        while idx.size:
            s = stage[idx]
            can = s < J
            nxt = np.where(can, s + 1, 0)
            hit = can & targ[nxt, pos[idx]]
            sel = idx[hit]
            if not sel.size:
                break
            stage[sel] += 1
            gam[sel, stage[sel]] = step
            anchors[sel, stage[sel]] = pts[pos[sel]]
            idx = sel

    advance(active, 0)
    active = active[stage[active] < J]
    step = 0
    while active.size and step < plan.step_budget:
        p = pos[active]
        u = rng.uniform(jkey[active], step)
        choice = np.minimum((u * g.mu[p]).astype(np.int64), g.mu[p] - 1)
        new = g.packed[p, choice]
        pos[active] = new
        step += 1
        npts = pts[new]
        # extents for every stage already started
        d_all = np.max(np.abs(anchors[active] - npts[:, None, :]), axis=2)
        started = np.arange(J + 1)[None, :] <= stage[active][:, None]
        ext[active] = np.where(started, np.maximum(ext[active], d_all), ext[active])
        s = stage[active]
        d_cur = d_all[np.arange(active.size), s]
        out = (d_cur >= radii[s]) | face[new]
        failure[active[out]] = s[out]
        keep = active[~out]
        advance(keep, step)
        active = keep[stage[keep] < J]
    failure[active] = stage[active]  # budget exhausted
    success = failure < 0
    sig = np.full((n, J + 1), np.nan)
    if success.any():
        for j in range(J + 1):
            sig[success, j] = plan.sigma_tilde[j][pos[success]]
    return CascadeBatch(success, gam, ext, sig, pos, failure)


def run_gamma_cascade(g: ClusterGraph, x0, plan: CascadePlan, seed, replica_id=0):
    """Single-trajectory cascade record (dict)."""
    b = cascade_batch(g, g.id_of(x0), plan, seed, [replica_id])
    return {
        "success": bool(b.success[0]),
        "gammas": [int(v) for v in b.gammas[0]],
        "extents": [int(v) for v in b.extents[0]],
        "sigma_tilde": [float(v) for v in b.sigma_tilde[0]],
        "final": tuple(int(c) for c in g.points[b.final[0]]),
        "failed_stage": int(b.failure[0]),
    }
