"""Named verification suites, one per acceptance check.

Each suite returns a :class:`SuiteResult` whose ``record`` is plain data
(no timings, no thread counts), so reruns with the same seed serialize to
identical bytes.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .cluster_graph import ClusterGraph
from .density import (average_sandwich_check, lipschitz_check, regular_mask, sigma_field,
                      volume_concentration_stats)
from .errors import UsageError
from .lattice import Window
from .percolation import (generate, label_clusters, largest_cluster, largest_cluster_id,
                          seed_event_frequencies)
from .potential import (DirichletSystem, equilibrium_and_capacity, green_exact,
                        heat_kernel_matrix, hit_prob_exact, last_exit_residual)
from .resonance import (GrowthPair, absorption_experiment, build_standard_problem,
                        capacity_ratio, cascade_experiment, cascade_plan_from_fields,
                        half_space_fixture)
from .schedule import (I0_lemma_check, alpha_delta, alpha_exact, alpha_ratio_check, ell0_and_A,
                       elementary_lemma_bruteforce, intervals_within_bounds, lambert_w_check)
from .walk import estimate_hit_before, wilson_interval

# 1/u(3) with u(3) from a 2D quadrature of the Z^3 lattice Green function
Z3_ESCAPE_CAPACITY = 3.9567760226904385


@dataclass
class SuiteResult:
    name: str
    passed: bool
    record: dict = field(default_factory=dict)
    elapsed: float = 0.0     # kept out of ``record`` on purpose

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self):
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}"


def _fmt(x):
    return float(f"{x:.12g}")


# ----------------------------------------------------------- schedule


def schedule_identities(seed=0, threads=None):
    rec = {}
    a1 = alpha_exact(1)
    rec["alpha_1"] = f"{a1.numerator}/{a1.denominator}"
    ok_a1 = a1 == Fraction(1, 38)
    delta_err = 0.0
    for J in range(1, 65):
        a, d = alpha_delta(J)
        delta_err = max(delta_err, float(abs(d - a / 4)))
    ratio_ok = all(alpha_ratio_check(J) for J in range(1, 65))
    bounds_ok = all(intervals_within_bounds(J) for J in range(1, 65))
    u = rng.uniform_block(seed, rng.SAMPLE, 0, 400).reshape(100, 4)
    card_bad = 0
    for row in u:
        I = 1 + int(row[0] * 20)
        J = 1 + int(row[1] * 8)
        L = 5 + int(row[2] * 10)
        ell_star = (I + 1) * (J + 1) * L + int(row[3] * 500)
        _, _, A_star = ell0_and_A(ell_star, I, J, L)
        card_bad += len(A_star) != (J + 1) * I
    rec.update(delta_max_err=delta_err, ratio_below_10_9=ratio_ok, intervals_in_bounds=bool(bounds_ok),
               A_star_cardinality_failures=card_bad, randomized_cases=100)
    return SuiteResult("schedule-identities", bool(ok_a1 and delta_err <= 1e-15 and ratio_ok and bounds_ok and card_bad == 0), rec)


def alternatives(seed=0, threads=None):
    deltas = [round(0.01 * k, 2) for k in range(1, 25)]
    cases, skipped, failures = elementary_lemma_bruteforce(10**5, deltas, seed)
    rec = {"laws": 10**5, "deltas": deltas, "cases": cases, "skipped": skipped, "failures": failures}
    return SuiteResult("alternatives", failures == 0 and cases > 0, rec)


def lambert(seed=0, threads=None):
    u = np.linspace(0.01, 50.0, 10**4)
    rep = lambert_w_check(u)
    rec = {"points": int(u.size), "min_margin": _fmt(rep.margin.min()),
           "argmin_u": _fmt(u[int(np.argmin(rep.margin))]), "max_width": float(rep.width.max()),
           "weakened_form_holds_anywhere": bool(rep.weakened_holds.any())}
    return SuiteResult("lambert", rep.all_positive and rep.certified, rec)


def gamma_recursion_suite(seed=0, threads=None):
    rows = []
    ok = True
    for c2 in [round(0.1 * i, 1) for i in range(1, 10)]:
        for k in (2, 3, 4):
            holds, lhs, rhs = I0_lemma_check(c2, k, 0.3)
            ok &= holds
            rows.append({"c2": c2, "k": k, "holds": holds, "lhs": _fmt(float(lhs)), "rhs": _fmt(float(rhs))})
    return SuiteResult("gamma-recursion", bool(ok), {"eps": 0.3, "cases": rows})


# ---------------------------------------------------------- potential


def _random_subset(g, frac, seed, stream_offset, exclude):
    u = rng.uniform_block(seed, rng.SAMPLE, stream_offset, g.n)
    m = (u < frac) & ~exclude
    if not m.any():
        m[np.flatnonzero(~exclude)[0]] = True
    return m


def potential_exactness(seed=0, threads=None, instances=50, side=12, p=0.75):
    worst = {"green_sym": 0.0, "last_exit": 0.0, "hk_sym": 0.0, "ck": 0.0}
    mono_bad = sub_bad = 0
    for i in range(instances):
        cfg = generate("site", 3, side, p, seed * 1000 + i)
        g = largest_cluster(cfg)
        sys = DirichletSystem.window_killed(g)
        G, ii = green_exact(sys)
        worst["green_sym"] = max(worst["green_sym"], float(np.abs(G - G.T).max()))
        face = sys.killed
        A = _random_subset(g, 0.05, seed * 1000 + i, 0, face)
        B = _random_subset(g, 0.05, seed * 1000 + i, g.n, face)
        eqA = equilibrium_and_capacity(sys, A)
        worst["last_exit"] = max(worst["last_exit"], last_exit_residual(sys, A, eqA, (G, ii)))
        cap_B = equilibrium_and_capacity(sys, B).capacity
        cap_AB = equilibrium_and_capacity(sys, A | B).capacity
        mono_bad += cap_AB < max(eqA.capacity, cap_B) - 1e-9
        sub_bad += cap_AB > eqA.capacity + cap_B + 1e-9
        s, t = 1.5, 2.5
        Qs = heat_kernel_matrix(g, s)
        Qt = heat_kernel_matrix(g, t)
        Qst = heat_kernel_matrix(g, s + t)
        worst["hk_sym"] = max(worst["hk_sym"], float(np.abs(Qs - Qs.T).max()))
        ck = (Qs * g.mu[None, :]) @ Qt
        worst["ck"] = max(worst["ck"], float(np.abs(ck - Qst).max()))
    ok = (worst["green_sym"] <= 1e-10 and worst["last_exit"] <= 1e-9 and worst["hk_sym"] <= 1e-10
          and worst["ck"] <= 1e-9 and mono_bad == 0 and sub_bad == 0)
    rec = {k: float(v) for k, v in worst.items()}
    rec.update(instances=instances, side=side, monotonicity_failures=int(mono_bad),
               subadditivity_failures=int(sub_bad))
    return SuiteResult("potential-exactness", bool(ok), rec)


def capacity_anchor(seed=0, threads=None, sides=(33, 65, 129)):
    caps = []
    for s in sides:
        g = ClusterGraph.full(Window.centered(3, s // 2))
        sys = DirichletSystem.window_killed(g)
        sys.sparse_cap = max(sys.sparse_cap, g.n)
        A = np.zeros(g.n, dtype=bool)
        A[g.id_of((0, 0, 0))] = True
        caps.append(equilibrium_and_capacity(sys, A).capacity)
    s = np.asarray(sides, dtype=float)
    X = np.stack([np.ones_like(s), 1 / s, 1 / s ** 2], axis=1)
    coef = np.linalg.solve(X, np.asarray(caps)) if len(sides) == 3 else np.linalg.lstsq(X, caps, rcond=None)[0]
    rel = abs(coef[0] - Z3_ESCAPE_CAPACITY) / Z3_ESCAPE_CAPACITY
    rec = {"sides": list(sides), "capacities": [_fmt(c) for c in caps], "extrapolated": _fmt(coef[0]),
           "oracle": Z3_ESCAPE_CAPACITY, "relative_error": _fmt(rel)}
    return SuiteResult("capacity-anchor", bool(rel <= 0.015), rec)


def mc_exact(seed=0, threads=None, instances=20, replicas=10**5, side=16, p=0.75):
    rows = []
    inside = 0
    for i in range(instances):
        cfg = generate("site", 3, side, p, seed * 1000 + 500 + i)
        g = largest_cluster(cfg)
        sys = DirichletSystem.window_killed(g)
        A = _random_subset(g, 0.03, seed * 1000 + i, 0, sys.killed)
        h = hit_prob_exact(sys, A)
        cand = np.flatnonzero(sys.interior & ~A)
        u = rng.uniform(rng.derive_key(seed, rng.SAMPLE, i), 0)
        x = int(cand[int(u * cand.size)])
        est = estimate_hit_before(g, g.points[x], A, ("exit", sys.interior), replicas,
                                  seed * 1000 + i, z=3.0, threads=threads)
        lo, hi = wilson_interval(est.hits, replicas, 3.0)
        hit = lo <= h[x] <= hi
        inside += hit
        rows.append({"exact": _fmt(h[x]), "mc": est.p_hat, "ci": [_fmt(lo), _fmt(hi)], "inside": bool(hit)})
    return SuiteResult("mc-exact", inside >= instances - 1,
                       {"instances": instances, "replicas": replicas, "inside": int(inside), "rows": rows})


# ------------------------------------------------------------ density


def density_lemmas(seed=0, threads=None, configs=20, side=128, p=0.75, alpha=0.2, probes=10**4,
                   ell=5, ell_p=0):
    total_lip = total_sw = 0
    worst_lip = worst_sw = 0.0
    used = 0
    checked = 0
    for i in range(configs):
        cfg = generate("site", 3, side, p, seed * 1000 + i)
        g = largest_cluster(cfg)
        eta_hat = g.n / g.window.size
        region = np.ones(g.n, dtype=bool)
        for R in sorted({2 ** ell_p, 2 ** ell}):
            region &= regular_mask(g, R, alpha, eta_hat).ravel()[g.sites]
        # the sandwich needs σ_{ℓ'} over B(x, 2^ℓ) with full balls
        margin = 2 ** ell + 2 ** ell_p
        rel = g.points - g.window.lo
        region &= np.all((rel >= margin) & (rel <= g.window.side - 1 - margin), axis=1)
        ids = np.flatnonzero(region)
        if ids.size == 0:
            continue
        used += 1
        u = rng.uniform_block(seed * 1000 + i, rng.SAMPLE, 0, probes)
        pick = ids[np.floor(u * ids.size).astype(np.int64)]
        U1 = g.points[:, 0] * 1.0 + 0.37 * g.points[:, 1] >= 0.5
        lip = lipschitz_check(g, U1, ell, pick, eta_hat)
        sw = average_sandwich_check(g, U1, ell, ell_p, pick, alpha, eta_hat)
        total_lip += lip.violations
        total_sw += sw.violations
        worst_lip = max(worst_lip, lip.worst_ratio)
        worst_sw = max(worst_sw, sw.worst_ratio)
        checked += probes
    rec = {"configs": configs, "configs_with_probes": used, "probes": checked,
           "lipschitz_violations": total_lip, "sandwich_violations": total_sw,
           "lipschitz_worst_ratio": _fmt(worst_lip), "sandwich_worst_ratio": _fmt(worst_sw)}
    return SuiteResult("density-lemmas", used == configs and total_lip == 0 and total_sw == 0, rec)


def volume_trend(seed=0, threads=None, seeds=10, side=256, p=0.75, alpha=0.2, radii=(4, 8, 16, 32)):
    table = []
    votes = 0
    for i in range(seeds):
        cfg = generate("site", 3, side, p, seed * 1000 + i)
        g = largest_cluster(cfg)
        fr = [volume_concentration_stats(g, alpha, R) for R in radii]
        dec = all(b < a for a, b in zip(fr, fr[1:]))
        votes += dec
        table.append({"fractions": [_fmt(f) for f in fr], "strictly_decreasing": dec})
    return SuiteResult("volume-trend", votes * 2 > seeds,
                       {"radii": list(radii), "seeds": seeds, "votes": votes, "per_seed": table})


def seed_events(seed=0, threads=None, seeds=20, side=128, p=0.75, alpha=0.2, L0s=(8, 16, 32)):
    D = np.zeros(len(L0s))
    I = np.zeros(len(L0s))
    for i in range(seeds):
        cfg = generate("site", 3, side, p, seed * 1000 + i)
        lab = label_clusters(cfg)
        eta_hat = lab.sizes[largest_cluster_id(cfg, lab)] / cfg.window.size
        for k, L0 in enumerate(L0s):
            d, ib, _ = seed_event_frequencies(cfg, L0, alpha, eta_hat, lab)
            D[k] += d / seeds
            I[k] += ib / seeds

    def trend(v):
        return bool(np.all(np.diff(v) <= 0) and v[-1] < v[0])

    rec = {"L0": list(L0s), "D_bar": [_fmt(v) for v in D], "I_bar": [_fmt(v) for v in I]}
    return SuiteResult("seed-events", trend(D) and trend(I), rec)


# ----------------------------------------------------- walk experiments


def cascade(seed=0, threads=None, replicas=200, max_probes=200, walk_half=40):
    scales = [4, 2, 0]
    density_half = walk_half + 4 * 2 ** scales[0]
    out = {}
    ok = True
    for name, p in (("full_lattice", None), ("site_cluster", 0.75)):
        fx = half_space_fixture(walk_half, density_half, p=p, seed=seed)
        plan = cascade_plan_from_fields(scales, 2, fx.fields(scales), fx.fields(scales, "sigma_tilde"), 3)
        ids = np.flatnonzero(plan.targets[0])
        reach = int(1.5 * 2 ** scales[0]) + 1
        ids = ids[np.abs(fx.graph.points[ids]).max(axis=1) <= walk_half - reach]
        ids = ids[:: max(1, ids.size // max_probes)][:max_probes]
        r = cascade_experiment(fx.graph, plan, ids, replicas, seed)
        r["success_rate"] = _fmt(r["success_rate"])
        r["ci"] = [_fmt(c) for c in r["ci"]]
        out[name] = r
        ok &= r["extent_violations"] == 0 and r["sigma_violations"] == 0
    out["scales"] = scales
    out["alpha_tilde"] = "3/640"
    return SuiteResult("cascade", bool(ok), out)


def solidification(seed=1, threads=None, Ns=(16, 32, 64), replicas=2000, starts=64):
    a = lambda n: n / 4
    b = lambda n: n ** 1.25 / 2
    probs = [build_standard_problem("perforated_shell", N, seed=seed, b_N=b(N)) for N in Ns]
    rows = absorption_experiment(probs, replicas, seed + 6, GrowthPair.from_functions(Ns, a, b, 1.0),
                                 lambda n: 16 / n, a, b, limit=starts, chi_min=0.2, threads=threads)
    caps = [capacity_ratio(pr) for pr in probs]
    for r, c in zip(rows, caps):
        r["capacity_ratio"] = _fmt(c["ratio"])
        r["chained_slack"] = _fmt(c["chained_slack"])
        r["pairing_slack"] = _fmt(c["pairing_slack"])
        r["chi_hat"] = _fmt(r["chi_hat"])
        for k in ("sup_escape_exact_sample", "sup_escape_exact_all"):
            r[k] = _fmt(r[k])
    esc = [r["sup_escape_upper"] for r in rows]
    ratio = [c["ratio"] for c in caps]
    checks = {
        "chi_at_least_0.2": all(r["chi_ok"] for r in rows),
        "epsilon_ratio_halving": all(
            math.isclose(p1.epsilon / 2 ** p1.ell_star, 2 * p2.epsilon / 2 ** p2.ell_star)
            for p1, p2 in zip(probs, probs[1:])),
        "escape_non_increasing": all(y <= x for x, y in zip(esc, esc[1:])),
        "escape_final_at_most_0.2": esc[-1] <= 0.2,
        "capacity_ratio_non_decreasing": all(y >= x for x, y in zip(ratio, ratio[1:])),
        "capacity_ratio_final_at_least_0.8": ratio[-1] >= 0.8,
        "chained_inequality": all(c["chained_slack"] >= -1e-9 for c in caps),
    }
    return SuiteResult("solidification", all(checks.values()), {"rows": rows, "checks": checks})


SUITES = {
    "schedule-identities": schedule_identities,
    "alternatives": alternatives,
    "lambert": lambert,
    "gamma-recursion": gamma_recursion_suite,
    "potential-exactness": potential_exactness,
    "capacity-anchor": capacity_anchor,
    "mc-exact": mc_exact,
    "density-lemmas": density_lemmas,
    "volume-trend": volume_trend,
    "cascade": cascade,
    "solidification": solidification,
    "seed-events": seed_events,
}


def run_suite(name, seed=None, threads=None) -> SuiteResult:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t = time.perf_counter()
    kw = {"threads": threads}
    if seed is not None:
        kw["seed"] = seed
    res = SUITES[name](**kw)
    res.elapsed = time.perf_counter() - t
    res.record = {"suite": name, "passed": res.passed, **res.record}
    return res
