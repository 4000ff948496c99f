from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perc_solidify.errors import UsageError
from perc_solidify.lattice import neighbor_offsets
from perc_solidify.percolation import (from_occupancy, generate, label_clusters, largest_cluster,
                                       largest_cluster_id, local_uniqueness_stat,
                                       product_condition_check, read_config, s_r_mask,
                                       seed_cube_anchors, seed_event_frequencies, write_config)


def bfs_components(cfg):
    """Flood fill oracle: list of sets of flat indices."""
    w = cfg.window
    shape = w.shape
    offs = neighbor_offsets(w.dim)
    if cfg.model == "site":
        open_ = cfg.occupancy
    else:
        open_ = np.ones(shape, dtype=bool)
    seen = np.zeros(shape, dtype=bool)
    comps = []
    for start in zip(*np.nonzero(open_)):
        if seen[start]:
            continue
        comp, q = set(), deque([start])
        seen[start] = True
        while q:
            u = q.popleft()
            comp.add(np.ravel_multi_index(u, shape))
            for k, o in enumerate(offs):
                v = tuple(np.add(u, o))
                if any(c < 0 or c >= w.side for c in v) or seen[v] or not open_[v]:
                    continue
                if cfg.model == "bond":
                    axis = k // 2
                    base = u if o[axis] > 0 else v
                    if not cfg.occupancy[(axis,) + tuple(base)]:
                        continue
                seen[v] = True
                q.append(v)
        comps.append(comp)
    return comps


def labeled_components(cfg):
    lab = label_clusters(cfg)
    flat = lab.labels.ravel()
    return [set(np.flatnonzero(flat == c)) for c in range(lab.count)], lab


@given(st.sampled_from(["site", "bond"]), st.integers(2, 3), st.integers(2, 7),
       st.floats(0.2, 0.8), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_labeling_matches_flood_fill(model, dim, side, p, seed):
    cfg = generate(model, dim, side, p, seed)
    ours, lab = labeled_components(cfg)
    oracle = bfs_components(cfg)
    assert sorted(map(sorted, ours)) == sorted(map(sorted, oracle))
    assert [len(c) for c in ours] == list(lab.sizes)
    # canonical order: by smallest index
    firsts = [min(c) for c in ours]
    assert firsts == sorted(firsts)


def test_generate_is_deterministic_and_seed_sensitive():
    a = generate("site", 3, 16, 0.6, 1)
    assert a == generate("site", 3, 16, 0.6, 1)
    assert not a == generate("site", 3, 16, 0.6, 2)
    assert abs(a.occupancy.mean() - 0.6) < 0.05


def test_generate_rejects_bad_input():
    with pytest.raises(UsageError):
        generate("site", 3, 8, 1.5, 0)
    with pytest.raises(UsageError):
        generate("hex", 3, 8, 0.5, 0)


def test_config_roundtrip(tmp_path):
    for model in ("site", "bond"):
        cfg = generate(model, 3, 9, 0.55, 4)
        path = tmp_path / f"{model}.perc"
        write_config(path, cfg)
        back = read_config(path)
        assert back == cfg and back.window == cfg.window and back.p == cfg.p
    with pytest.raises(UsageError):
        write_config(tmp_path / "x.perc", generate("site", 3, 9, 0.5, 0, origin=(-4, -4, -4)))


def test_diameters_of_a_line():
    occ = np.zeros((5, 5, 5), dtype=bool)
    occ[0:5, 2, 2] = True
    occ[4, 0:3, 2] = True
    lab = label_clusters(from_occupancy(occ))
    assert lab.count == 1
    assert lab.diameters[0] == 4 + 2


def test_largest_and_s_r():
    occ = np.zeros((6, 6, 6), dtype=bool)
    occ[0, 0, 0:6] = True
    occ[5, 5, 5] = True
    cfg = from_occupancy(occ)
    lab = label_clusters(cfg)
    cid = largest_cluster_id(cfg, lab)
    assert lab.sizes[cid] == 6
    assert s_r_mask(cfg, lab, 5).sum() == 6
    assert s_r_mask(cfg, lab, 6).sum() == 0
    assert largest_cluster(cfg, lab).n == 6


def test_product_condition_value():
    r = [1] * 40
    ell = [4 ** (i + 2) for i in range(40)]
    rep = product_condition_check(r, ell, 0.2, 0.6)
    assert rep.product_lower == pytest.approx(0.98413, abs=5e-6)
    assert rep.passes is True
    assert rep.threshold < rep.product_lower


def test_product_condition_fails_on_tight_ratio():
    rep = product_condition_check([4], [16], 0.2, 0.6)
    assert rep.passes is False and rep.product_lower == 0.0


def test_local_uniqueness_full_lattice_always_holds():
    cfg = from_occupancy(np.ones((24, 24, 24), dtype=bool))
    assert local_uniqueness_stat(cfg, 4, 50, 0) == 1.0


def test_local_uniqueness_two_slabs_fail_connection():
    occ = np.zeros((24, 24, 24), dtype=bool)
    occ[:, :, 10] = occ[:, :, 12] = True
    _, f_nonempty, f_conn = local_uniqueness_stat(from_occupancy(occ), 4, 40, 1, detail=True)
    # boxes that miss both slabs fail the first event, boxes that see both fail the second
    assert 0 < f_nonempty < 1 and 0 < f_conn < 1


def test_seed_events_trivial_on_full_lattice():
    occ = np.ones((32, 32, 32), dtype=bool)
    cfg = from_occupancy(occ)
    d, i, n = seed_event_frequencies(cfg, 8, 0.2, 1.0)
    assert n == len(seed_cube_anchors(cfg.window, 8)) == 8
    assert d == 0.0 and i == 0.0
