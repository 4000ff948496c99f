import numpy as np

from perc_solidify import rng


def test_uniform_is_a_pure_function_of_key_and_counter():
    key = rng.derive_key(7, rng.JUMP, 3)
    a = rng.uniform(key, np.arange(10, dtype=np.uint64))
    b = np.array([rng.uniform(key, i) for i in range(10)])
    assert np.array_equal(a, b)


def test_block_matches_offset_block():
    whole = rng.uniform_block(5, rng.SAMPLE, 0, 100)
    tail = rng.uniform_block(5, rng.SAMPLE, 40, 60)
    assert np.array_equal(whole[40:], tail)


def test_streams_and_seeds_differ():
    a = rng.uniform_block(1, rng.SITE, 0, 1000)
    b = rng.uniform_block(1, rng.BOND, 0, 1000)
    c = rng.uniform_block(2, rng.SITE, 0, 1000)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_range_and_rough_uniformity():
    u = rng.uniform_block(11, rng.SAMPLE, 0, 200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    counts, _ = np.histogram(u, bins=10, range=(0, 1))
    # chi-square with 9 dof; 40 is far in the tail
    chi2 = ((counts - 20_000) ** 2 / 20_000).sum()
    assert chi2 < 40


def test_replica_keys_broadcast():
    keys = rng.derive_key(3, rng.JUMP, np.arange(5, dtype=np.uint64))
    assert keys.shape == (5,)
    assert len(set(keys.tolist())) == 5
