import numpy as np
import pytest

from perc_solidify.cluster_graph import ClusterGraph
from perc_solidify.errors import UsageError
from perc_solidify.lattice import Window
from perc_solidify.percolation import generate, largest_cluster
from perc_solidify.potential import DirichletSystem, hit_prob_exact
from perc_solidify.walk import (CascadePlan, StopSpec, cascade_batch, estimate_hit_before,
                                positions_at_time, run_ct_walk, run_jump_chain, simulate,
                                wilson_interval)


@pytest.fixture(scope="module")
def small():
    return largest_cluster(generate("site", 3, 10, 0.75, 9))


def test_stop_spec_needs_a_condition():
    with pytest.raises(UsageError):
        StopSpec()


def test_threads_do_not_change_results(small):
    spec = StopSpec(radius_stops=[3], window_kill=True)
    starts = np.full(3000, small.n // 2)
    outs = [simulate(small, starts, spec, 4, threads=t, continuous=True) for t in (1, 4, 8)]
    for o in outs[1:]:
        assert np.array_equal(o.code, outs[0].code)
        assert np.array_equal(o.position, outs[0].position)
        assert np.array_equal(o.elapsed, outs[0].elapsed)


def test_single_walk_matches_batch(small):
    spec = StopSpec(radius_stops=[2], window_kill=True)
    x0 = small.points[small.n // 2]
    batch = simulate(small, np.full(5, small.n // 2), spec, 8)
    for r in range(5):
        one = run_jump_chain(small, x0, spec, 8, r)
        assert one.jumps == batch.jumps[r]
        assert one.position == tuple(small.points[batch.position[r]])


def test_radius_stop_reaches_radius(small):
    x = int(np.flatnonzero(~small.on_window_face())[0])
    out = run_ct_walk(small, small.points[x], StopSpec(radius_stops=[2], window_kill=True), 1)
    assert out.cause in ("tau_2", "window")
    assert out.elapsed > 0


def test_target_at_start_fires_immediately(small):
    x = small.n // 3
    tgt = small.vertex_mask([x])
    out = simulate(small, [x], StopSpec(targets=[("A", tgt)]), 0)
    assert out.count("A") == 1 and out.jumps[0] == 0
    ret = simulate(small, [x], StopSpec(targets=[("A", tgt, True)], step_budget=10**6), 0)
    assert ret.count("A") == 1 and ret.jumps[0] >= 2


def test_mc_agrees_with_exact(small):
    sys = DirichletSystem.window_killed(small)
    A = small.vertex_mask(np.flatnonzero(sys.interior)[::17])
    h = hit_prob_exact(sys, A)
    x = int(np.flatnonzero(sys.interior & ~A)[5])
    est = estimate_hit_before(small, small.points[x], A, ("exit", sys.interior), 20000, 3, z=4.0)
    assert est.ci[0] <= h[x] <= est.ci[1]
    assert est.optimistic <= est.pessimistic


def test_wilson_interval_edges():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_positions_at_time_zero(small):
    ids = positions_at_time(small, small.points[0], 0.0, 10, 1)
    assert np.all(np.asarray(ids) == 0)


def test_positions_at_time_spread(small):
    ids = positions_at_time(small, small.points[small.n // 2], 3.0, 500, 2)
    assert len(set(np.asarray(ids).tolist())) > 5


def test_cascade_single_stage_is_hypothesis_indicator():
    g = ClusterGraph.full(Window.centered(3, 6))
    t0 = g.points[:, 0] >= 0
    plan = CascadePlan([2], [t0], [np.full(g.n, 0.5)], 0.01)
    inside = cascade_batch(g, g.id_of((1, 0, 0)), plan, 0, np.arange(10))
    outside = cascade_batch(g, g.id_of((-1, 0, 0)), plan, 0, np.arange(10))
    assert inside.success.all() and not outside.success.any()


def test_cascade_failure_when_target_and_radius_coincide():
    g = ClusterGraph.full(Window.centered(3, 6))
    t0 = np.abs(g.points).max(axis=1) == 0
    t1 = np.abs(g.points).max(axis=1) >= 2
    plan = CascadePlan([1, 0], [t0, t1], [np.full(g.n, 0.5)] * 2, 0.01)
    b = cascade_batch(g, g.id_of((0, 0, 0)), plan, 0, np.arange(200))
    # leaving B(0, 2) and entering t1 happen on the same jump: always a failure
    assert not b.success.any()
