import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perc_solidify.cluster_graph import ClusterGraph
from perc_solidify.density import (average_sandwich_check, ball_average, ball_average_field, box_sums,
                                   c_lip, estimate_R_den, lipschitz_check, sigma, sigma_field,
                                   volume_concentration_stats)
from perc_solidify.lattice import Window
from perc_solidify.percolation import generate, largest_cluster


@given(st.integers(2, 3), st.integers(1, 7), st.integers(0, 4), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_box_sums_brute_force(dim, side, r, seed):
    a = np.random.default_rng(seed).integers(0, 3, size=(side,) * dim)
    got = box_sums(a, r)
    for idx in np.ndindex(a.shape):
        sl = tuple(slice(max(i - r, 0), min(i + r + 1, side)) for i in idx)
        assert got[idx] == a[sl].sum()


@pytest.mark.parametrize("ell", [0, 1, 2, 3])
def test_sigma_half_space_closed_form(ell):
    g = ClusterGraph.full(Window.centered(3, 2 ** ell + 1))
    U1 = g.points[:, 0] >= 1
    val, trunc = sigma(g, U1, (0, 0, 0), ell)
    assert not trunc
    assert val == pytest.approx(2 ** ell / (2 ** (ell + 1) + 1), abs=1e-15)


def test_sigma_field_matches_pointwise():
    cfg = generate("site", 3, 14, 0.7, 2)
    g = largest_cluster(cfg)
    U1 = g.points[:, 1] >= 7
    f = sigma_field(g, U1, 1)
    for i in range(0, g.n, 97):
        v, t = sigma(g, U1, g.points[i], 1)
        assert f.values[i] == pytest.approx(v) and f.truncated[i] == t


@pytest.mark.parametrize("ell", [0, 1, 2])
def test_half_space_worst_increment(ell):
    w = Window.centered(3, 3 * 2 ** ell)
    g = ClusterGraph.full(w)
    U1 = g.points[:, 0] >= 1
    f = sigma_field(g, U1, ell)
    full = np.flatnonzero(np.abs(g.points).max(axis=1) <= 2 ** ell)
    rep = lipschitz_check(g, U1, ell, full, 1.0, field=f)
    worst = rep.worst_ratio * c_lip(ell, 1.0)
    assert worst == pytest.approx(1 / (2 ** (ell + 1) + 1), abs=1e-12)
    assert rep.violations == 0


def test_ball_average_field_matches_pointwise():
    cfg = generate("site", 3, 12, 0.75, 5)
    g = largest_cluster(cfg)
    f = np.sin(np.arange(g.n))
    avg, _ = ball_average_field(g, f, 1)
    for i in range(0, g.n, 61):
        assert avg[i] == pytest.approx(ball_average(g, f, g.points[i], 1)[0])


def test_sandwich_on_full_lattice():
    g = ClusterGraph.full(Window.centered(3, 12))
    U1 = g.points[:, 0] >= 0
    probes = np.flatnonzero(np.abs(g.points).max(axis=1) <= 3)
    rep = average_sandwich_check(g, U1, 3, 0, probes, 0.2, 1.0)
    assert rep.violations == 0 and rep.checked == probes.size


def test_regular_volume_on_full_lattice():
    g = ClusterGraph.full(Window.centered(3, 10))
    assert estimate_R_den(g, 0.1, probe_box=((-2,) * 3, (2,) * 3)) == 1
    assert estimate_R_den(g, 0.1) is None  # every ball at the faces is clipped
    assert volume_concentration_stats(g, 0.1, 2) == 0.0
