"""Nearest-neighbor mining against brute-force scans."""

import numpy as np
import pytest

from compatlearn.errors import ParameterError, ShapeError
from compatlearn.mining import assemble_pseudo_triplets, nearest_indices


def brute_nearest(queries, keys):
    out = []
    for q in queries:
        dists = [np.linalg.norm(q - k) for k in keys]
        out.append(int(np.argmin(dists)))
    return np.array(out)


class TestNearestIndices:
    def test_analytic_example(self):
        keys = np.array([[1.0, 1.0], [5.0, 5.0], [0.5, 0.0]])
        assert nearest_indices(np.array([[0.0, 0.0]]), keys)[0] == 2

    def test_query_equal_to_key(self):
        rng = np.random.default_rng(0)
        keys = rng.normal(size=(10, 4))
        idx = nearest_indices(keys[[3, 7]], keys)
        assert list(idx) == [3, 7]

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            q = rng.normal(size=(8, 6))
            k = rng.normal(size=(20, 6))
            assert np.array_equal(nearest_indices(q, k), brute_nearest(q, k))

    def test_exact_ties_break_low(self):
        keys = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        q = np.array([[1.0, 0.0], [0.5, 0.5]])
        idx = nearest_indices(q, keys)
        assert idx[0] == 0  # exact duplicate at 0 and 2 -> lowest wins
        assert idx[1] == 0  # symmetric tie between rows 0/1 -> lowest wins

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        q = rng.normal(size=(5, 3))
        k = rng.normal(size=(9, 3))
        shift = rng.normal(size=3)
        assert np.array_equal(nearest_indices(q, k), nearest_indices(q + shift, k + shift))

    def test_errors(self):
        with pytest.raises(ParameterError):
            nearest_indices(np.zeros((2, 3)), np.zeros((0, 3)))
        with pytest.raises(ShapeError):
            nearest_indices(np.zeros((2, 3)), np.zeros((4, 5)))


def brute_assemble(a, p, n, u):
    ia, ip, in_ = brute_nearest(a, u), brute_nearest(p, u), brute_nearest(n, u)
    trips, dropped = [], 0
    for t in range(len(a)):
        if len({ia[t], ip[t], in_[t]}) < 3:
            dropped += 1
        else:
            trips.append((ia[t], ip[t], in_[t]))
    return trips, dropped


class TestAssemblePseudoTriplets:
    def test_exact_copies_are_selected(self):
        rng = np.random.default_rng(3)
        u = rng.normal(size=(10, 4))
        a, p, n = u[[2]], u[[5]], u[[8]]
        trips, dropped = assemble_pseudo_triplets(a, p, n, u)
        assert dropped == 0
        assert (trips[0].idx_a, trips[0].idx_p, trips[0].idx_n) == (2, 5, 8)

    def test_collision_dropped_and_counted(self):
        u = np.array([[0.0, 0.0], [10.0, 10.0], [20.0, 20.0]])
        a = np.array([[0.1, 0.0]])
        p = np.array([[0.0, 0.1]])  # both nearest to u[0]
        n = np.array([[10.0, 10.1]])
        trips, dropped = assemble_pseudo_triplets(a, p, n, u)
        assert trips == [] and dropped == 1

    def test_matches_brute_force_including_drops(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, p, n = rng.normal(size=(3, 6, 5))
            # small key set so collisions actually occur
            u = rng.normal(size=(5, 5))
            trips, dropped = assemble_pseudo_triplets(a, p, n, u)
            exp_trips, exp_dropped = brute_assemble(a, p, n, u)
            assert dropped == exp_dropped
            assert [(t.idx_a, t.idx_p, t.idx_n) for t in trips] == exp_trips

    def test_counts_add_up(self):
        rng = np.random.default_rng(5)
        a, p, n = rng.normal(size=(3, 32, 8))
        u = rng.normal(size=(6, 8))
        trips, dropped = assemble_pseudo_triplets(a, p, n, u)
        assert len(trips) + dropped == 32

    def test_errors(self):
        rng = np.random.default_rng(6)
        a, p, n = rng.normal(size=(3, 4, 3))
        with pytest.raises(ParameterError):
            assemble_pseudo_triplets(a, p, n, rng.normal(size=(2, 3)))
        with pytest.raises(ShapeError):
            assemble_pseudo_triplets(a, p, n[:2], rng.normal(size=(5, 3)))
