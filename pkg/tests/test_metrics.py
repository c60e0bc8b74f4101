import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sceneorder.metrics import (ahd, categorical_kl, class_distribution, dataset_quality, diversity,
                                inconsistency, scene_quality)
from sceneorder.ordering import ROOT, SceneTree, tree2forest

from conftest import make_scene


class TestAhd:
    truth = SceneTree({0: ROOT, 1: ROOT, 2: 0, 3: 1}, 4)

    def test_identical(self):
        assert ahd(self.truth, self.truth) == 1.0

    def test_partial_level(self):
        pred = SceneTree({0: ROOT, 1: ROOT, 2: 0, 3: 2}, 4)
        assert ahd(pred, self.truth) == pytest.approx(0.75)

    def test_flat_prediction(self):
        flat = SceneTree({i: ROOT for i in range(4)}, 4)
        assert ahd(flat, self.truth) == pytest.approx(0.25)

    def test_mismatched_sets(self):
        with pytest.raises(ValueError):
            ahd(SceneTree({0: ROOT}, 4), self.truth)


class TestInconsistency:
    def test_singleton(self):
        assert inconsistency([(0, 1, 2)]) == 0.0

    def test_identical(self):
        assert inconsistency([(0, 1, 2), (0, 1, 2)]) == 0.0

    def test_one_swap(self):
        assert inconsistency([("a", "b", "c"), ("a", "c", "b")]) == 2.0

    def test_empty(self):
        with pytest.raises(ValueError):
            inconsistency([])

    @given(st.lists(st.permutations([0, 1, 2, 3, 4]), min_size=1, max_size=6), st.permutations(range(5)))
    def test_relabel_invariant(self, seqs, relabel):
        mapped = [[relabel[x] for x in s] for s in seqs]
        assert inconsistency(seqs) == pytest.approx(inconsistency(mapped))
        assert (inconsistency(seqs) == 0) == (len({tuple(s) for s in seqs}) == 1)


class TestDiversity:
    def test_counts(self):
        base = SceneTree({0: ROOT, 1: 0, 3: ROOT, 4: 3}, 6, (0, 3))
        assert diversity(tree2forest(base, [])) == 1
        assert diversity(tree2forest(base.with_parents({2: 0}), [5])) == 3
        assert diversity(tree2forest(base, [2, 5])) == 9


class TestKl:
    def test_self(self):
        assert categorical_kl([0.2, 0.8], [0.2, 0.8]) == pytest.approx(0.0, abs=1e-9)

    def test_closed_forms(self):
        assert categorical_kl([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
            0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-5)
        assert categorical_kl([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-5)

    def test_zero_mass_in_q_is_finite(self):
        assert math.isfinite(categorical_kl([0.5, 0.5], [1.0, 0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            categorical_kl([1.0], [0.5, 0.5])

    @given(st.lists(st.floats(0.01, 1), min_size=3, max_size=3), st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
    def test_nonnegative_and_asymmetric(self, p, q):
        assert categorical_kl(p, q) >= -1e-12

    def test_class_distribution(self):
        s = make_scene([(0, (0, 0, 0), (1, 1, 1), 0), (0, (1, 0, 1), (1, 1, 1), 0), (2, (2, 0, 2), (1, 1, 1), 0)])
        assert class_distribution([s], 4).tolist() == pytest.approx([2 / 3, 0, 1 / 3, 0])


class TestQuality:
    def test_clean_scene(self):
        s = make_scene([(0, (-1, 0, -1), (1, 1, 1), 0.0), (1, (1, 0, 1), (1, 1, 1), 0.0)])
        assert scene_quality(s) == {"out_of_bounds_rate": 0.0, "pairwise_overlap_rate": 0.0}

    def test_one_outside(self):
        s = make_scene([(0, (-2, 0, -2), (1, 1, 1), 0.0), (0, (2, 0, 2), (1, 1, 1), 0.0),
                        (0, (-2, 0, 2), (1, 1, 1), 0.0), (0, (5, 0, 0), (1, 1, 1), 0.0)])
        assert scene_quality(s)["out_of_bounds_rate"] == 0.25

    def test_tolerance(self):
        # pokes 4 cm past the wall: allowed; 10 cm: not
        inside = make_scene([(0, (2.54, 0, 0), (1, 1, 1), 0.0)])
        outside = make_scene([(0, (2.6, 0, 0), (1, 1, 1), 0.0)])
        assert scene_quality(inside)["out_of_bounds_rate"] == 0.0
        assert scene_quality(outside)["out_of_bounds_rate"] == 1.0

    def test_concave_floor_notch(self):
        ell = ((0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4))
        s = make_scene([(0, (3, 0, 3), (0.5, 1, 0.5), 0.0), (0, (1, 0, 1), (0.5, 1, 0.5), 0.0)], floor=ell)
        assert scene_quality(s)["out_of_bounds_rate"] == 0.5

    def test_coincident_pair(self):
        o = (0, (0, 0, 0), (1, 1, 1), 0.0)
        assert scene_quality(make_scene([o, o]))["pairwise_overlap_rate"] == 1.0

    def test_dataset_weighting(self):
        a = make_scene([(0, (0, 0, 0), (1, 1, 1), 0.0)])
        b = make_scene([(0, (9, 0, 0), (1, 1, 1), 0.0), (0, (-1, 0, 0), (1, 1, 1), 0.0),
                        (0, (1, 0, 0), (1, 1, 1), 0.0)])
        assert dataset_quality([a, b])["out_of_bounds_rate"] == pytest.approx(0.25)
        assert np.isfinite(dataset_quality([])["pairwise_overlap_rate"])
