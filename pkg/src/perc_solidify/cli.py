"""Command-line entry point.

Summaries go to ``--out`` (or stdout) as canonical JSON.  The run manifest
(parameters, version, input digests, timestamps) is written next to it as
``<out>.manifest.json``, or to stderr when the summary goes to stdout, so
the summary itself is byte-identical across reruns and thread counts.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import os
import sys

import numpy as np

from . import __version__
from .cluster_graph import ClusterGraph
from .density import sigma_field
from .errors import CapacityError, DomainError, StructuralError, UsageError
from .formats import dumps, read_vertex_set, write_csv, write_vertex_set
from .lattice import parse_shape
from .percolation import (generate, label_clusters, largest_cluster_id, read_config,
                          seed_event_frequencies, write_config)
from .potential import DirichletSystem, equilibrium_and_capacity

EXIT_USAGE, EXIT_VIOLATION, EXIT_IO = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _threads(args):
    n = args.threads
    if n is None:
        return None
    return n if n > 0 else (os.cpu_count() or 1)


# ------------------------------------------------------------ inputs


def _load_cluster(args):
    cfg = read_config(args.config)
    lab = label_clusters(cfg)
    if lab.count == 0:
        raise DomainError("configuration has no open site")
    cid = largest_cluster_id(cfg, lab, spanning=getattr(args, "spanning", False))
    g = ClusterGraph.from_mask(cfg, lab.labels == cid, check_connected=False)
    return cfg, lab, g


def _u1_mask(args, g):
    if args.u1:
        pts = read_vertex_set(args.u1, g.dim)
        ids = g.ids_of(pts, strict=False)
        return g.vertex_mask(ids[ids >= 0])
    if args.halfspace is None:
        normal = np.array([1.0, 0.37, 0.0, 0.0][: g.dim])
        center = (g.window.lo + g.window.hi) / 2.0
        return g.points.astype(float) @ normal >= center @ normal + 0.5
    try:
        normal_txt, off = args.halfspace.split(":")
        normal = np.array([float(t) for t in normal_txt.split(",")])
        off = float(off)
    except ValueError:
        raise UsageError("--halfspace expects N1,N2,...:OFFSET") from None
    if normal.size != g.dim:
        raise UsageError("half-space normal has the wrong dimension")
    return g.points.astype(float) @ normal >= off


def _add_u1(p):
    p.add_argument("--u1", help="vertex-set file for U1 (else a half-space)")
    p.add_argument("--halfspace", help="U1 = {n.y >= c} as N1,N2,N3:C (default: tilted plane through the window centre)")


# ----------------------------------------------------------- commands


def cmd_generate(args):
    if not args.out:
        raise UsageError("generate needs --out for the configuration file")
    cfg = generate(args.model, args.dim, args.side, args.p, args.seed)
    write_config(args.out, cfg)
    occ = cfg.occupancy
    return {"model": args.model, "dim": args.dim, "side": args.side, "p": args.p, "seed": args.seed,
            "open": int(occ.sum()), "open_fraction": float(occ.mean()), "file": os.path.basename(args.out)}, None


def cmd_cluster(args):
    cfg, lab, g = _load_cluster(args)
    cid = largest_cluster_id(cfg, lab, spanning=args.spanning)
    if args.vertices:
        write_vertex_set(args.vertices, g.points, comment="largest cluster")
    table = None
    if args.csv:
        table = (["cluster", "size", "l1_diameter"],
                 [(i, int(lab.sizes[i]), int(lab.diameters[i])) for i in range(lab.count)])
    return {"clusters": int(lab.count), "largest": int(cid), "largest_size": int(lab.sizes[cid]),
            "largest_diameter": int(lab.diameters[cid]), "eta_hat": g.n / cfg.window.size,
            "estimator": "exact"}, table


def cmd_density(args):
    _, _, g = _load_cluster(args)
    U1 = _u1_mask(args, g)
    f = sigma_field(g, U1, args.ell, args.variant)
    full = ~f.truncated
    table = None
    if args.csv:
        cols = ["x", "y", "z", "w"][: g.dim] if g.dim <= 4 else [f"x{k}" for k in range(g.dim)]
        table = (cols + ["value", "truncated"],
                 [tuple(int(c) for c in p) + (float(v), int(t)) for p, v, t in zip(g.points, f.values, f.truncated)])
    vals = f.values[full]
    return {"ell": args.ell, "variant": args.variant, "vertices": int(g.n), "full_ball": int(full.sum()),
            "mean": float(vals.mean()) if vals.size else None,
            "min": float(vals.min()) if vals.size else None,
            "max": float(vals.max()) if vals.size else None, "estimator": "exact"}, table


def cmd_schedule(args):
    from .schedule import build_schedule

    s = build_schedule(args.J, args.dim, args.eta, ell_star=args.ell_star, I=args.I, L=args.L)
    return s.to_json(), None


def cmd_resonance(args):
    from .resonance import resonance_set
    from .schedule import build_schedule

    _, _, g = _load_cluster(args)
    eta = g.n / g.window.size
    s = build_schedule(args.J, g.dim, eta, ell_star=args.ell_star, I=args.I, L=args.L)
    if not s.A_star:
        raise DomainError(f"schedule has no admissible scales (ell0 = {s.ell0})")
    U1 = _u1_mask(args, g)
    res = resonance_set(g, U1, s.A_star, args.J)
    table = None
    if args.csv:
        table = (["x", "y", "z"][: g.dim], [tuple(int(c) for c in p) for p in g.points[res]])
    return {"A_star": s.A_star, "J": args.J, "size": int(res.sum()), "vertices": int(g.n),
            "estimator": "exact"}, table


def _problem(args, N):
    from .resonance import build_standard_problem

    shape = parse_shape(open(args.shape).read()) if args.shape else None
    return build_standard_problem(args.kind, N, p=args.p, seed=args.seed, A=shape,
                                  hole_fraction=args.hole_fraction, epsilon=args.epsilon,
                                  full_lattice=args.full_lattice)


def cmd_absorb(args):
    from .resonance import absorption_experiment
    from .schedule import GrowthPair

    Ns = args.N
    a = lambda n: n / 4
    b = lambda n: n ** 1.25 / 2
    probs = [_problem(args, N) for N in Ns]
    for pr in probs:
        pr.b_N = b(pr.N)
    rows = absorption_experiment(probs, args.replicas, args.seed, GrowthPair.from_functions(Ns, a, b, 1.0),
                                 lambda n: 4 * args.epsilon / n, a, b, limit=args.starts,
                                 threads=_threads(args))
    for r in rows:
        r["estimator"] = {"sup_escape": "mc", "sup_escape_exact_all": "exact", "chi_hat": "exact"}
    return {"kind": args.kind, "rows": rows}, None


def cmd_capacity(args):
    if args.set:
        _, _, g = _load_cluster(args)
        pts = read_vertex_set(args.set, g.dim)
        ids = g.ids_of(pts, strict=False)
        sys_ = DirichletSystem.window_killed(g)
        A = g.vertex_mask(ids[ids >= 0]) & sys_.interior
        eq = equilibrium_and_capacity(sys_, A)
        table = None
        if args.csv:
            table = (["x", "y", "z"][: g.dim] + ["e_A"],
                     [tuple(int(c) for c in g.points[i]) + (float(eq.e_A[i]),) for i in np.flatnonzero(A)])
        return {"capacity": eq.capacity, "set_size": int(A.sum()), "residual": eq.residual,
                "estimator": "exact"}, table
    from .resonance import capacity_ratio

    out = capacity_ratio(_problem(args, args.N[0]))
    out["estimator"] = "exact"
    return out, None


def cmd_onestep(args):
    from . import rng
    from .resonance import one_step_experiment

    _, _, g = _load_cluster(args)
    U1 = _u1_mask(args, g)
    margin = 2 ** args.ell + 2 ** args.ell_p
    rel = g.points - g.window.lo
    ok = np.all((rel >= margin) & (rel <= g.window.side - 1 - margin), axis=1)
    cand = np.flatnonzero(ok)
    if cand.size == 0:
        raise DomainError("window too small for these scales")
    u = rng.uniform_block(args.seed, rng.SAMPLE, 0, args.probes)
    probes = cand[np.floor(u * cand.size).astype(np.int64)]
    r = one_step_experiment(g, U1, args.ell, args.ell_p, args.delta, probes, args.replicas, args.seed,
                            threads=_threads(args))
    table = (["probe", "beta", "p_hat", "ci_lo", "ci_hi"],
             [(x, b, p, c[0], c[1]) for x, b, p, c in r.pop("rows")]) if args.csv else None
    r.pop("rows", None)
    r["estimator"] = "mc"
    return r, table


def cmd_cascade(args):
    from .resonance import cascade_experiment, cascade_plan_from_fields, half_space_fixture

    scales = args.scales
    fx = half_space_fixture(args.walk_half, args.walk_half + 4 * 2 ** scales[0], p=args.p, seed=args.seed)
    plan = cascade_plan_from_fields(scales, len(scales) - 1, fx.fields(scales),
                                    fx.fields(scales, "sigma_tilde"), fx.graph.dim)
    ids = np.flatnonzero(plan.targets[0])
    reach = int(1.5 * 2 ** scales[0]) + 1
    ids = ids[np.abs(fx.graph.points[ids]).max(axis=1) <= args.walk_half - reach]
    ids = ids[:: max(1, ids.size // max(args.probes, 1))][: args.probes]
    r = cascade_experiment(fx.graph, plan, ids, args.replicas, args.seed)
    r["estimator"] = "mc"
    r["scales"] = scales
    return r, None


def cmd_seed_events(args):
    rows = []
    for i in range(args.seeds):
        cfg = generate("site", args.dim, args.side, args.p, args.seed * 1000 + i)
        lab = label_clusters(cfg)
        eta = lab.sizes[largest_cluster_id(cfg, lab)] / cfg.window.size
        for L0 in args.L0:
            d, ib, n = seed_event_frequencies(cfg, L0, args.alpha, eta, lab)
            rows.append((args.seed * 1000 + i, L0, d, ib, n))
    summary = {}
    for L0 in args.L0:
        sel = [r for r in rows if r[1] == L0]
        summary[str(L0)] = {"D_bar": float(np.mean([r[2] for r in sel])),
                            "I_bar": float(np.mean([r[3] for r in sel])), "cubes": sel[0][4]}
    table = (["seed", "L0", "D_bar", "I_bar", "cubes"], rows) if args.csv else None
    return {"alpha": args.alpha, "p": args.p, "side": args.side, "per_L0": summary, "estimator": "exact"}, table


def cmd_verify(args):
    from .suites import run_suite

    res = run_suite(args.suite, seed=args.seed, threads=_threads(args))
    print(res.line(), file=sys.stderr)
    return res.record, None


# ------------------------------------------------------------ parser


def build_parser():
    p = _Parser(prog="perc-solidify", description="Random walks on percolation clusters: fields, schedules, experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--threads", type=int, default=None, help="0 = all cores; never changes results")
        sp.add_argument("--out", "-o", help="output path (default stdout)")
        sp.add_argument("--csv", help="optional CSV table path")

    g = sub.add_parser("generate", help="sample a configuration")
    common(g)
    g.add_argument("--model", choices=["site", "bond"], default="site")
    g.add_argument("--dim", type=int, default=3)
    g.add_argument("--side", type=int, required=True)
    g.add_argument("--p", type=float, required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("cluster", help="label clusters of a configuration")
    common(c)
    c.add_argument("--config", required=True)
    c.add_argument("--spanning", action="store_true")
    c.add_argument("--vertices", help="write the chosen cluster as a vertex-set file")
    c.set_defaults(func=cmd_cluster)

    d = sub.add_parser("density", help="local density field")
    common(d)
    d.add_argument("--config", required=True)
    d.add_argument("--ell", type=int, required=True)
    d.add_argument("--variant", choices=["sigma", "sigma_tilde"], default="sigma")
    _add_u1(d)
    d.set_defaults(func=cmd_density)

    s = sub.add_parser("schedule", help="scale schedule")
    common(s)
    s.add_argument("--J", type=int, required=True)
    s.add_argument("--dim", type=int, default=3)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--ell-star", type=int)
    s.add_argument("--I", type=int)
    s.add_argument("--L", type=int)
    s.set_defaults(func=cmd_schedule)

    r = sub.add_parser("resonance", help="resonance set of a configuration")
    common(r)
    r.add_argument("--config", required=True)
    r.add_argument("--J", type=int, default=1)
    r.add_argument("--ell-star", type=int, required=True)
    r.add_argument("--I", type=int, default=1)
    r.add_argument("--L", type=int, default=1)
    _add_u1(r)
    r.set_defaults(func=cmd_resonance)

    for name, fn, helptext in (("absorb", cmd_absorb, "escape-before-interface sweep"),
                               ("capacity", cmd_capacity, "exact capacities")):
        a = sub.add_parser(name, help=helptext)
        common(a, seed=1)
        a.add_argument("--kind", default="perforated_shell",
                       choices=["solid_shell", "perforated_shell", "two_box_nonconvex"])
        a.add_argument("--N", type=_int_list, default=[16, 32, 64])
        a.add_argument("--p", type=float, default=0.75)
        a.add_argument("--shape", help="ShapeSpec file for A")
        a.add_argument("--hole-fraction", type=float)
        a.add_argument("--epsilon", type=int, default=4)
        a.add_argument("--full-lattice", action="store_true")
        a.add_argument("--replicas", type=int, default=2000)
        a.add_argument("--starts", type=int, default=64)
        if name == "capacity":
            a.add_argument("--config")
            a.add_argument("--set", help="vertex-set file; capacity in the config's cluster")
        a.set_defaults(func=fn)

    o = sub.add_parser("onestep", help="one-step hitting experiment")
    common(o)
    o.add_argument("--config", required=True)
    o.add_argument("--ell", type=int, default=5)
    o.add_argument("--ell-p", type=int, default=0)
    o.add_argument("--delta", type=float, default=0.05)
    o.add_argument("--probes", type=int, default=20)
    o.add_argument("--replicas", type=int, default=1000)
    _add_u1(o)
    o.set_defaults(func=cmd_onestep)

    k = sub.add_parser("cascade", help="cascade experiment on the half-space fixture")
    common(k)
    k.add_argument("--scales", type=_int_list, default=[4, 2, 0])
    k.add_argument("--walk-half", type=int, default=40)
    k.add_argument("--p", type=float, help="site cluster instead of the full lattice")
    k.add_argument("--probes", type=int, default=200)
    k.add_argument("--replicas", type=int, default=200)
    k.set_defaults(func=cmd_cascade)

    e = sub.add_parser("seed-events", help="seed event frequencies")
    common(e)
    e.add_argument("--side", type=int, default=128)
    e.add_argument("--dim", type=int, default=3)
    e.add_argument("--p", type=float, default=0.75)
    e.add_argument("--alpha", type=float, default=0.2)
    e.add_argument("--seeds", type=int, default=20)
    e.add_argument("--L0", type=_int_list, default=[8, 16, 32])
    e.set_defaults(func=cmd_seed_events)

    v = sub.add_parser("verify", help="run a named acceptance suite")
    common(v, seed=None)
    from .suites import SUITES

    v.add_argument("suite", choices=sorted(SUITES))
    v.set_defaults(func=cmd_verify)
    return p


def _inputs(args):
    paths = [getattr(args, k, None) for k in ("config", "u1", "set", "shape")]
    return {p: _digest(p) for p in paths if p}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = _now()
    try:
        digests = _inputs(args)
        summary, table = args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StructuralError, CapacityError) as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    params = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {"command": args.command, "params": params, "seed": args.seed, "version": __version__,
                "input_digests": digests, "started": started, "finished": _now()}
    try:
        if args.command == "generate":
            print(dumps(summary), end="")
            with open(args.out + ".manifest.json", "w") as fh:
                fh.write(dumps(manifest))
        elif args.out:
            with open(args.out, "w") as fh:
                fh.write(dumps(summary))
            with open(args.out + ".manifest.json", "w") as fh:
                fh.write(dumps(manifest))
        else:
            print(dumps(summary), end="")
            print(dumps(manifest), end="", file=sys.stderr)
        if table is not None:
            write_csv(args.csv, *table)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "verify" and not summary.get("passed", False):
        return EXIT_VIOLATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
