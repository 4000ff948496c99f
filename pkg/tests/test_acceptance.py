"""Acceptance criteria 1-13.

Each criterion prints one ``criterion N: PASS|FAIL`` line. Run with pytest
(lines are repeated in the terminal summary) or directly as a script.
"""
import json
import sys
from pathlib import Path

import pytest

from perc_solidify.cli import main as cli_main
from perc_solidify.formats import dumps
from perc_solidify.suites import SUITES, run_suite

# criterion -> (suite, runtime limit in seconds)
CRITERIA = {
    1: ("schedule-identities", 1),
    2: ("alternatives", 60),
    3: ("lambert", 1),
    4: ("gamma-recursion", 60),
    5: ("potential-exactness", 300),
    6: ("capacity-anchor", 600),
    7: ("mc-exact", 300),
    8: ("density-lemmas", 600),
    9: ("volume-trend", 600),
    10: ("cascade", 600),
    11: ("solidification", 1800),
    12: ("seed-events", 600),
}
THREADS = (1, 4, 8)

LINES = {}
_cache = {}


def suite_result(name, threads=1):
    key = (name, threads)
    if key not in _cache:
        _cache[key] = run_suite(name, threads=threads)
    return _cache[key]


def _volume(r):
    mean = [sum(row["fractions"][k] for row in r["per_seed"]) / r["seeds"] for k in range(len(r["radii"]))]
    return f"votes={r['votes']}/{r['seeds']} R={r['radii']} mean_violating_fraction={[round(m, 6) for m in mean]}"


def _cascade(r):
    return " ".join(f"{k}: success={r[k]['success_rate']} trials={r[k]['trials']} "
                    f"extent_violations={r[k]['extent_violations']} sigma_violations={r[k]['sigma_violations']}"
                    for k in ("full_lattice", "site_cluster"))


def _solid(r):
    cols = {k: [row[k] for row in r["rows"]] for k in ("N", "chi_hat", "sup_escape_upper", "capacity_ratio")}
    failed = [k for k, v in r["checks"].items() if not v]
    return " ".join(f"{k}={[round(v, 4) for v in vs]}" for k, vs in cols.items()) + f" failed_checks={failed}"


def _seeds(r):
    return f"L0={r['L0']} D_bar={r['D_bar']} I_bar={r['I_bar']}"


DETAILS = {"volume-trend": _volume, "cascade": _cascade, "solidification": _solid, "seed-events": _seeds}


def _details(record):
    if record["suite"] in DETAILS:
        return DETAILS[record["suite"]](record)
    parts = []
    for k, v in record.items():
        if k in ("suite", "passed") or isinstance(v, (dict, list)):
            continue
        parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)[:240]


def report(n, ok, details):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {details}".rstrip()
    LINES[n] = line
    print(line)
    return ok


def check_criterion(n):
    name, limit = CRITERIA[n]
    res = suite_result(name)
    in_time = res.elapsed < limit
    ok = res.passed and in_time
    report(n, ok, f"[{name} {res.elapsed:.1f}s/{limit}s] {_details(res.record)}")
    return ok, res


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, res = check_criterion(n)
    assert res.passed, dumps(res.record)
    assert res.elapsed < CRITERIA[n][1], f"runtime {res.elapsed:.1f}s"


def _cli_runs(tmp):
    """Small instances of every experiment command; returns {label: argv}."""
    cfg = tmp / "cfg.bin"
    assert cli_main(["generate", "--side", "24", "--p", "0.75", "--seed", "3", "--out", str(cfg)]) == 0
    vs = tmp / "set.txt"
    vs.write_text("12 12 12\n12 12 13\n12 13 12\n")
    c = str(cfg)
    return {
        "cluster": ["cluster", "--config", c],
        "density": ["density", "--config", c, "--ell", "1"],
        "resonance": ["resonance", "--config", c, "--ell-star", "3"],
        "capacity-set": ["capacity", "--config", c, "--set", str(vs)],
        "capacity": ["capacity", "--N", "16", "--replicas", "100"],
        "onestep": ["onestep", "--config", c, "--ell", "2", "--ell-p", "0", "--delta", "0.1",
                    "--probes", "6", "--replicas", "200"],
        "cascade": ["cascade", "--scales", "2,1,0", "--walk-half", "12", "--p", "0.75",
                    "--probes", "20", "--replicas", "40"],
        "absorb": ["absorb", "--N", "16", "--replicas", "200", "--starts", "8"],
        "seed-events": ["seed-events", "--side", "32", "--seeds", "2", "--L0", "4,8"],
    }


def cli_determinism(tmp):
    bad = []
    tmp = Path(tmp)
    for label, argv in _cli_runs(tmp).items():
        outs = set()
        for t in THREADS:
            out, csv = tmp / f"{label}-{t}.json", tmp / f"{label}-{t}.csv"
            code = cli_main(argv + ["--seed", "7", "--threads", str(t), "--out", str(out), "--csv", str(csv)])
            if code != 0:
                bad.append(f"{label} exit {code}")
                break
            blob = out.read_bytes() + (csv.read_bytes() if csv.exists() else b"")
            outs.add(blob)
        if len(outs) > 1:
            bad.append(label)
    return bad


@pytest.mark.slow
def test_criterion_13(tmp_path):
    differ = []
    for name in SUITES:
        ref = dumps(suite_result(name).record)
        for t in THREADS[1:]:
            if dumps(run_suite(name, threads=t).record) != ref:
                differ.append(f"{name}@{t}")
    cli_bad = cli_determinism(tmp_path)
    ok = not differ and not cli_bad
    report(13, ok, f"suites={len(SUITES)} cli_experiments={len(_cli_runs(tmp_path))} threads={THREADS} "
                   f"differing={differ + cli_bad}")
    assert ok


if __name__ == "__main__":
    import tempfile

    results = [check_criterion(n)[0] for n in sorted(CRITERIA)]
    with tempfile.TemporaryDirectory() as d:
        differ = [f"{s}@{t}" for s in SUITES for t in THREADS[1:]
                  if dumps(run_suite(s, threads=t).record) != dumps(suite_result(s).record)]
        cli_bad = cli_determinism(d)
    results.append(report(13, not differ and not cli_bad, f"differing={differ + cli_bad}"))
    sys.exit(0 if all(results) else 2)
