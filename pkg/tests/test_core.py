import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_map, oracle_dist
from iwknn.core import (ApRegistry, ContractError, RadioMap, ReferencePoint, RssiVector, canonical_mac,
                        euclidean_distance, knn_estimate, knn_weights, nearest, weighted_centroid,
                        wknn_estimate, wknn_weights)

dbm = st.floats(-100, 0, allow_nan=False)


class TestRegistry:
    def test_canonical_form(self):
        assert canonical_mac("AA-BB-CC-00-11-22") == "aa:bb:cc:00:11:22"
        assert canonical_mac("aabbcc001122") == "aa:bb:cc:00:11:22"

    def test_rejects_bad_mac(self):
        with pytest.raises(ValueError):
            canonical_mac("aa:bb:cc")

    def test_duplicates_rejected_after_canonicalisation(self):
        with pytest.raises(ValueError, match="duplicate"):
            ApRegistry(("AA:BB:CC:00:11:22", "aa-bb-cc-00-11-22"))

    def test_indices_contiguous(self):
        reg = ApRegistry.synthetic(300)
        assert [reg.index(m) for m in reg.macs] == list(range(300))

    def test_registry_id_depends_on_order(self):
        a = ApRegistry(("02:00:00:00:00:01", "02:00:00:00:00:02"))
        b = ApRegistry(("02:00:00:00:00:02", "02:00:00:00:00:01"))
        assert a.registry_id != b.registry_id

    def test_vector_length_checked(self):
        with pytest.raises(ContractError):
            ApRegistry.synthetic(3).vector([-50.0, -60.0])


class TestRssiVector:
    def test_immutable(self):
        v = ApRegistry.synthetic(2).vector([-50, -60])
        with pytest.raises(ValueError):
            v.values[0] = 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            RssiVector([-50.0, float("nan")], "x")


class TestEuclidean:
    def test_identity(self):
        v = ApRegistry.synthetic(4).vector([-50, -61.5, -100, -77])
        assert euclidean_distance(v, v) == 0.0

    def test_three_four_five(self):
        reg = ApRegistry.synthetic(2)
        assert euclidean_distance(reg.vector([-50, -60]), reg.vector([-53, -56])) == 5.0

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(7)
        reg = ApRegistry.synthetic(10)
        for _ in range(200):
            a, b = rng.uniform(-100, 0, 10), rng.uniform(-100, 0, 10)
            assert euclidean_distance(reg.vector(a), reg.vector(b)) == pytest.approx(oracle_dist(a, b), abs=1e-9)

    def test_registry_mismatch(self):
        a = ApRegistry.synthetic(2).vector([-50, -60])
        b = ApRegistry(("aa:bb:cc:00:00:01", "aa:bb:cc:00:00:02")).vector([-50, -60])
        with pytest.raises(ContractError):
            euclidean_distance(a, b)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            euclidean_distance(RssiVector([-50.0], "r"), RssiVector([-50.0, -60.0], "r"))

    @given(st.lists(st.tuples(dbm, dbm, dbm), min_size=1, max_size=12))
    def test_symmetry_and_triangle(self, rows):
        reg = ApRegistry.synthetic(len(rows))
        a, b, c = (reg.vector([r[i] for r in rows]) for i in range(3))
        ab, ba = euclidean_distance(a, b), euclidean_distance(b, a)
        assert ab == ba and ab >= 0
        assert euclidean_distance(a, c) <= ab + euclidean_distance(b, c) + 1e-9
        assert (ab == 0) == (a == b)


class TestWknnWeights:
    def test_equal_pair(self):
        assert [w for _, w in wknn_weights([(0, 3.0), (1, 3.0)], 2)] == [0.5, 0.5]

    def test_zero_distance_takes_all(self):
        w = dict(wknn_weights([(0, 2.0), (1, 0.0), (2, 5.0)], 3))
        assert w == {1: 1.0, 0: 0.0, 2: 0.0}

    def test_zero_distance_ties_split(self):
        w = dict(wknn_weights([(0, 0.0), (1, 0.0), (2, 5.0)], 3))
        assert w == {0: 0.5, 1: 0.5, 2: 0.0}

    def test_one_two_four(self):
        w = wknn_weights([(0, 1.0), (1, 2.0), (2, 4.0)], 3)
        # exact rational recomputation of 1/d^2 normalisation
        inv = [Fraction(1, d * d) for d in (1, 2, 4)]
        expected = [float(x / sum(inv)) for x in inv]
        assert expected == pytest.approx([16 / 21, 4 / 21, 1 / 21], abs=1e-15)
        assert [v for _, v in w] == pytest.approx(expected, abs=1e-12)

    def test_selects_k_smallest_with_id_tiebreak(self):
        w = wknn_weights([(5, 1.0), (2, 1.0), (9, 0.5), (1, 3.0)], 2)
        assert [i for i, _ in w] == [9, 2]

    def test_k_larger_than_candidates_uses_all(self):
        assert len(wknn_weights([(0, 1.0), (1, 2.0)], 5)) == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            wknn_weights([], 3)

    def test_bad_k_rejected(self):
        with pytest.raises(ValueError):
            wknn_weights([(0, 1.0)], 0)

    @settings(max_examples=1000)
    @given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=30),
           st.integers(1, 10), st.floats(1e-3, 1e3))
    def test_probability_vector_and_scale_invariance(self, ds, k, scale):
        pairs = list(enumerate(ds))
        w = wknn_weights(pairs, k)
        vals = [v for _, v in w]
        assert all(v >= 0 for v in vals)
        assert math.fsum(vals) == pytest.approx(1.0, abs=1e-9)
        scaled = wknn_weights([(i, d * scale) for i, d in pairs], k)
        if all(d * scale > 0 or d == 0 for d in ds):
            assert [i for i, _ in scaled] == [i for i, _ in w]
            assert [v for _, v in scaled] == pytest.approx(vals, abs=1e-9)

    @given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=20), st.integers(1, 8))
    def test_matches_sorted_oracle(self, ds, k):
        pairs = list(enumerate(ds))
        chosen = sorted(pairs, key=lambda p: (p[1], p[0]))[:k]
        inv = [1.0 / (d * d) for _, d in chosen]
        expected = [x / sum(inv) for x in inv]
        w = wknn_weights(pairs, k)
        assert [i for i, _ in w] == [i for i, _ in chosen]
        assert [v for _, v in w] == pytest.approx(expected, rel=1e-9)


class TestCentroid:
    def pts(self, coords):
        return make_map(coords, np.zeros((len(coords), 1)) - 50)

    def test_single(self):
        assert weighted_centroid([(0, 1.0)], self.pts([(3, 7)])) == (3.0, 7.0)

    def test_midpoint(self):
        assert weighted_centroid([(0, 0.5), (1, 0.5)], self.pts([(0, 0), (2, 4)])) == (1.0, 2.0)

    def test_hand_weights(self):
        x, y = weighted_centroid([(0, 16 / 21), (1, 4 / 21), (2, 1 / 21)], self.pts([(0, 0), (1, 0), (0, 1)]))
        assert (x, y) == pytest.approx((4 / 21, 1 / 21), abs=1e-15)

    def test_mapping_lookup(self):
        m = self.pts([(0, 0), (2, 4)])
        assert weighted_centroid([(1, 1.0)], m.as_lookup()) == (2.0, 4.0)

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            weighted_centroid([(7, 1.0)], self.pts([(0, 0)]))

    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=10),
           st.data())
    def test_inside_bounding_box(self, coords, data):
        raw = data.draw(st.lists(st.floats(0.01, 1), min_size=len(coords), max_size=len(coords)))
        total = math.fsum(raw)
        weights = [(i, r / total) for i, r in enumerate(raw)]
        lookup = {i: ReferencePoint(i, x, y, RssiVector([-50.0], "r")) for i, (x, y) in enumerate(coords)}
        x, y = weighted_centroid(weights, lookup)
        xs, ys = [c[0] for c in coords], [c[1] for c in coords]
        assert min(xs) - 1e-9 <= x <= max(xs) + 1e-9
        assert min(ys) - 1e-9 <= y <= max(ys) + 1e-9


class TestEstimates:
    def random_map(self, m, n, seed):
        rng = np.random.default_rng(seed)
        return make_map(rng.uniform(0, 20, (m, 2)).tolist(), rng.uniform(-90, -40, (m, n)),
                        bounds=(0.0, 0.0, 20.0, 20.0))

    def test_knn_k1_is_nearest(self):
        rmap = self.random_map(10, 4, 1)
        q = rmap.registry.vector(rmap.points[6].fingerprint.values + 0.1)
        assert knn_estimate(q, rmap, 1).coord == rmap.points[6].coord

    def test_knn_two_equidistant(self):
        rmap = make_map([(0, 0), (4, 2), (9, 9)], [[-50.0], [-60.0], [-90.0]])
        est = knn_estimate(rmap.registry.vector([-55.0]), rmap, 2)
        assert est.coord == (2.0, 1.0)

    def test_knn_k5_matches_oracle(self):
        for seed in range(20):
            rmap = self.random_map(10, 5, seed)
            q = np.random.default_rng(seed + 100).uniform(-90, -40, 5)
            order = sorted(range(10), key=lambda i: (oracle_dist(rmap.points[i].fingerprint.values, q), i))[:5]
            ox = sum(rmap.points[i].x for i in order) / 5
            oy = sum(rmap.points[i].y for i in order) / 5
            est = knn_estimate(rmap.registry.vector(q), rmap, 5)
            assert est.coord == pytest.approx((ox, oy), abs=1e-9)

    def test_knn_all_points_is_centroid(self):
        rmap = self.random_map(12, 3, 4)
        est = knn_estimate(rmap.registry.vector([-60, -60, -60]), rmap, 12)
        assert est.coord == pytest.approx(tuple(rmap.xy.mean(axis=0)), abs=1e-12)

    def test_wknn_estimate_weights_sum_to_one(self):
        rmap = self.random_map(30, 6, 2)
        est = wknn_estimate(rmap.registry.vector(np.full(6, -70.0)), rmap, 5)
        assert len(est.neighbor_ids) == 5
        assert math.fsum(est.weights) == pytest.approx(1.0, abs=1e-9)

    def test_knn_weights_equal(self):
        assert [w for _, w in knn_weights([(0, 1.0), (1, 9.0), (2, 4.0)], 2)] == [0.5, 0.5]

    def test_nearest_order(self):
        assert nearest([(3, 2.0), (1, 2.0), (0, 5.0)], 2) == [(1, 2.0), (3, 2.0)]


class TestRadioMapValidation:
    def test_ids_in_order(self):
        reg = ApRegistry.synthetic(1)
        with pytest.raises(ValueError):
            RadioMap(reg, (ReferencePoint(1, 0, 0, reg.vector([-50])),), (0, 0, 1, 1))

    def test_point_outside_bounds(self):
        reg = ApRegistry.synthetic(1)
        with pytest.raises(ValueError, match="bounds"):
            RadioMap(reg, (ReferencePoint(0, 5, 0, reg.vector([-50])),), (0, 0, 1, 1))

    def test_foreign_fingerprint(self):
        reg = ApRegistry.synthetic(1)
        with pytest.raises(ContractError):
            RadioMap(reg, (ReferencePoint(0, 0, 0, RssiVector([-50.0], "other")),), (0, 0, 1, 1))

    def test_missing_params_are_nan_multipliers(self):
        rmap = make_map([(0, 0)], [[-50.0, -60.0]], fit_samples={(0, 1): np.linspace(-62, -58, 20)})
        g_inf, g_sup = rmap.multipliers(0)
        assert math.isnan(g_inf[0]) and math.isnan(g_sup[0])
        assert g_inf[1] == rmap.params[0, 1].g_inf
