import numpy as np
import pytest

from perc_solidify.cluster_graph import (ClusterGraph, boundary_relative, component_within,
                                         graph_distance_within, read_edge_list)
from perc_solidify.errors import DomainError, StructuralError
from perc_solidify.lattice import Window
from perc_solidify.percolation import from_occupancy, generate, label_clusters


def test_full_window_degrees():
    g = ClusterGraph.full(Window(3, 4))
    assert g.n == 64
    assert g.mu.max() == 6 and g.mu.min() == 3
    assert int(g.mu.sum()) == 2 * 3 * 4 * 4 * 3
    assert g.adjacency().nnz == int(g.mu.sum())


def test_ids_follow_window_order():
    cfg = generate("site", 3, 10, 0.7, 3)
    lab = label_clusters(cfg)
    g = ClusterGraph.from_mask(cfg, lab.labels == 0)
    assert np.all(np.diff(g.sites) > 0)
    assert np.array_equal(g.ids_of(g.points), np.arange(g.n))


def test_disconnected_mask_is_rejected():
    occ = np.zeros((5, 5, 5), dtype=bool)
    occ[0, 0, 0] = occ[4, 4, 4] = True
    cfg = from_occupancy(occ)
    with pytest.raises((DomainError, StructuralError)):
        ClusterGraph.from_mask(cfg, occ)


def test_bond_edges_respected():
    occ = np.zeros((3, 3, 3, 3), dtype=bool)
    occ[0, 0, 0, 0] = True          # edge (0,0,0)-(1,0,0)
    cfg = from_occupancy(occ, "bond")
    mask = np.zeros((3, 3, 3), dtype=bool)
    mask[0, 0, 0] = mask[1, 0, 0] = True
    g = ClusterGraph.from_mask(cfg, mask)
    assert g.mu.tolist() == [1, 1]


def test_boundary_relative_of_a_box():
    w = Window.centered(3, 3)
    g = ClusterGraph.full(w)
    U0 = np.abs(g.points).max(axis=1) <= 1
    S = boundary_relative(U0, g)
    # outer neighbours of a 3^3 cube: 6 faces of 9 sites
    assert S.sum() == 54
    assert np.all(np.abs(g.points[S]).max(axis=1) == 2)


def test_distance_and_components():
    occ = np.zeros((5, 5, 5), dtype=bool)
    occ[:, 0, 0] = True
    occ[4, :, 0] = True
    cfg = from_occupancy(occ)
    g = ClusterGraph.from_mask(cfg, occ)
    assert graph_distance_within(g, np.ones(g.n, bool), (0, 0, 0), (4, 4, 0)) == 8
    cut = ~g.vertex_mask(g.ids_of([(2, 0, 0)]))
    assert graph_distance_within(g, cut, (0, 0, 0), (4, 4, 0)) == float("inf")
    comps = component_within(g, cut)
    assert [len(c) for c in comps] == [2, 6]


def test_edge_list_roundtrip(tmp_path):
    g = ClusterGraph.full(Window(2, 3))
    path = tmp_path / "g.txt"
    g.write_edge_list(path)
    n, edges = read_edge_list(path)
    assert n == 9 and len(edges) == 12
