import math

import numpy as np
import pytest
import scipy.integrate as integrate

from perc_solidify.cluster_graph import ClusterGraph
from perc_solidify.errors import CapacityError, DomainError
from perc_solidify.lattice import Window
from perc_solidify.percolation import generate, largest_cluster
from perc_solidify.potential import (DirichletSystem, equilibrium_and_capacity, gaussian_envelope_fit,
                                     green_column, green_exact, heat_kernel, heat_kernel_matrix,
                                     hit_prob_exact, killed_heat_kernel, last_exit_residual,
                                     poisson_cutoff)
from perc_solidify.suites import Z3_ESCAPE_CAPACITY
from perc_solidify.walk import positions_at_time

# 1/(1 - return probability) for the simple walk on Z^3, frozen from the
# quadrature below (Watson's integral reduced to two dimensions)
WATSON_U3 = 1.516386059153345


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_watson_oracle_quadrature():
    f = lambda y, x: 1.0 / math.sqrt((3 - math.cos(x) - math.cos(y)) ** 2 - 1)  # noqa: E731
    val, err = integrate.dblquad(f, 0, math.pi, 0, math.pi, epsabs=1e-11, epsrel=1e-11)
    u = 3 / math.pi ** 2 * val
    assert u == pytest.approx(WATSON_U3, rel=1e-9)
    assert Z3_ESCAPE_CAPACITY == pytest.approx(6 / WATSON_U3, rel=1e-15)


@pytest.fixture(scope="module")
def cluster():
    return largest_cluster(generate("site", 3, 9, 0.75, 21))


def test_hitting_is_harmonic_off_the_sets(cluster):
    sys = DirichletSystem.window_killed(cluster)
    A = cluster.vertex_mask(np.flatnonzero(sys.interior)[::11])
    h = hit_prob_exact(sys, A)
    free = sys.interior & ~A
    Lh = sys.apply(h)
    assert np.abs(Lh[free]).max() < 1e-12
    assert np.all(h[A] == 1) and np.all(h[sys.killed] == 0)
    assert h.min() >= -1e-14 and h.max() <= 1 + 1e-14


def test_green_symmetry_and_column(cluster):
    sys = DirichletSystem.window_killed(cluster)
    G, ii = green_exact(sys)
    assert np.abs(G - G.T).max() < 1e-12
    col = green_column(sys, ii[3])
    assert np.allclose(col[ii], G[:, 3], atol=1e-12)


def test_last_exit_identity(cluster):
    sys = DirichletSystem.window_killed(cluster)
    A = cluster.vertex_mask(np.flatnonzero(sys.interior)[::7])
    assert last_exit_residual(sys, A) < 1e-12


def test_capacity_monotone_and_subadditive(cluster):
    sys = DirichletSystem.window_killed(cluster)
    ids = np.flatnonzero(sys.interior)
    A, B = cluster.vertex_mask(ids[:20]), cluster.vertex_mask(ids[15:40])
    ca = equilibrium_and_capacity(sys, A).capacity
    cb = equilibrium_and_capacity(sys, B).capacity
    cab = equilibrium_and_capacity(sys, A | B).capacity
    assert max(ca, cb) <= cab + 1e-12 <= ca + cb + 2e-12


def test_set_equal_to_its_own_reference_has_ratio_one(cluster):
    sys = DirichletSystem.window_killed(cluster)
    A = cluster.vertex_mask(np.flatnonzero(sys.interior)[:10])
    assert equilibrium_and_capacity(sys, A).capacity / equilibrium_and_capacity(sys, A.copy()).capacity == 1.0


def test_singleton_capacity_above_the_lattice_value():
    g = ClusterGraph.full(Window.centered(3, 8))
    sys = DirichletSystem.window_killed(g)
    A = g.vertex_mask([g.id_of((0, 0, 0))])
    cap = equilibrium_and_capacity(sys, A).capacity
    # killing makes escape easier, so the finite-volume value is larger
    assert Z3_ESCAPE_CAPACITY < cap < 6


def test_errors(cluster):
    sys = DirichletSystem.window_killed(cluster)
    with pytest.raises(DomainError):
        equilibrium_and_capacity(sys, np.zeros(cluster.n, bool))
    with pytest.raises(DomainError):
        hit_prob_exact(sys, sys.killed)
    with pytest.raises(DomainError):
        green_exact(DirichletSystem(cluster, np.zeros(cluster.n, bool)))
    big = ClusterGraph.full(Window.centered(3, 9))
    with pytest.raises(CapacityError):
        heat_kernel_matrix(big, 1.0)


def test_poisson_cutoff_tail():
    from scipy.stats import poisson

    for t in (0.5, 3.0, 40.0, 500.0):
        n = poisson_cutoff(t, 1e-12)
        assert poisson.sf(n, t) <= 1e-12


def test_heat_kernel_conservation_and_symmetry(cluster):
    Q = heat_kernel_matrix(cluster, 2.0)
    assert np.allclose((Q * cluster.mu[None, :]).sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(Q - Q.T).max() < 1e-13
    x = cluster.points[4]
    assert np.allclose(heat_kernel(cluster, 2.0, x), Q[4], atol=1e-14)


def test_killed_kernel_is_dominated(cluster):
    U = ~cluster.on_window_face()
    x = cluster.points[np.flatnonzero(U)[0]]
    q = heat_kernel(cluster, 1.5, x)
    qk = killed_heat_kernel(cluster, U, 1.5, x)
    assert np.all(qk <= q + 1e-15)
    assert np.all(qk[~U] == 0)


def test_heat_kernel_matches_simulation(cluster):
    x = cluster.n // 2
    q = heat_kernel(cluster, 1.0, cluster.points[x])
    ids = positions_at_time(cluster, cluster.points[x], 1.0, 40000, 5)
    emp = np.bincount(ids, minlength=cluster.n) / 40000
    p = q * cluster.mu
    assert np.abs(emp - p).max() < 5 * math.sqrt(p.max() / 40000)


def test_envelope_fit_recovers_gaussian():
    t = np.array([1.0, 2, 4, 8, 16, 32])
    r = np.array([0.0, 1, 3, 5, 2, 7])
    q = 0.3 * t ** -1.5 * np.exp(-0.5 * r ** 2 / t)
    fit = gaussian_envelope_fit(t, r, q, 3)
    assert fit.c2 == pytest.approx(0.5) and fit.c1 == pytest.approx(0.3)
    assert fit.upper_violations == 0 and fit.lower_violations == 0
