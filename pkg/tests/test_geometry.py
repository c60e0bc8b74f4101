import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sceneorder.geometry import (Box2D, SceneObject, build_distance_matrix, giou, iou, project_topdown,
                                 wrap_angle, yaw_matrix)

from conftest import make_scene
from oracles import raster_giou


def box(x0, z0, x1, z1):
    return Box2D((x0, z0), (x1, z1))


coord = st.floats(-5, 5, allow_nan=False)
extent = st.floats(0.05, 4, allow_nan=False)


@st.composite
def boxes(draw):
    x, z, w, d = draw(coord), draw(coord), draw(extent), draw(extent)
    return box(x, z, x + w, z + d)


class TestProjection:
    def test_axis_aligned(self):
        b = project_topdown(SceneObject(0, (0, 0, 0), (2, 1, 1), 0.0))
        assert b.min == pytest.approx((-1, -0.5)) and b.max == pytest.approx((1, 0.5))

    def test_quarter_turn_swaps_extents(self):
        b = project_topdown(SceneObject(0, (0, 0, 0), (2, 1, 1), math.pi / 2))
        assert b.min == pytest.approx((-0.5, -1)) and b.max == pytest.approx((0.5, 1))

    def test_eighth_turn(self):
        b = project_topdown(SceneObject(0, (0, 0, 0), (2, 1, 2), math.pi / 4))
        r2 = math.sqrt(2)
        assert b.min == pytest.approx((-r2, -r2)) and b.max == pytest.approx((r2, r2))

    @given(st.floats(0.1, 3), st.integers(-4, 4))
    def test_square_area_invariant_under_right_angles(self, side, k):
        a0 = project_topdown(SceneObject(0, (0, 0, 0), (side, 1, side), 0.0)).area
        ak = project_topdown(SceneObject(0, (0, 0, 0), (side, 1, side), wrap_angle(k * math.pi / 2))).area
        assert ak == pytest.approx(a0, rel=1e-12)

    def test_yaw_matrix_exact_at_right_angles(self):
        assert yaw_matrix(math.pi / 2).tolist() == [[0.0, -1.0], [1.0, 0.0]]
        assert yaw_matrix(-math.pi).tolist() == [[-1.0, 0.0], [0.0, -1.0]]

    def test_invalid_object(self):
        with pytest.raises(ValueError):
            SceneObject(0, (0, 0, 0), (0, 1, 1), 0.0)
        with pytest.raises(ValueError):
            SceneObject(-1, (0, 0, 0), (1, 1, 1), 0.0)


class TestGiou:
    def test_identical(self):
        a = box(0, 0, 1, 1)
        assert giou(a, a) == 1.0

    def test_half_overlap(self):
        assert giou(box(0, 0, 1, 1), box(0.5, 0, 1.5, 1)) == pytest.approx(1 / 3)

    def test_far_apart(self):
        assert giou(box(-0.5, -0.5, 0.5, 0.5), box(8.5, -0.5, 9.5, 0.5)) == pytest.approx(-0.8)

    def test_degenerate_boxes(self):
        p = box(1, 1, 1, 1)
        assert giou(p, p) == 1.0
        q = box(3, 3, 3, 3)
        assert iou(p, q) == 0.0
        assert -1.0 <= giou(p, q) <= 0.0

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        g = giou(a, b)
        assert g == pytest.approx(giou(b, a), abs=1e-12)
        assert -1.0 <= g <= 1.0

    @given(boxes(), boxes())
    def test_not_above_iou(self, a, b):
        assert giou(a, b) <= iou(a, b) + 1e-12

    @given(boxes())
    def test_self_is_one(self, a):
        assert giou(a, a) == pytest.approx(1.0)

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.uniform(-3, 3, 2)
            w = rng.uniform(0.2, 3, 4)
            a = (x[0], x[1], x[0] + w[0], x[1] + w[1])
            y = x + rng.uniform(-2, 2, 2)
            b = (y[0], y[1], y[0] + w[2], y[1] + w[3])
            assert giou(box(*a), box(*b)) == pytest.approx(raster_giou(a, b), abs=2e-2)


class TestDistanceMatrix:
    def test_single_object(self):
        s = make_scene([(0, (0, 0, 0), (1, 1, 1), 0.0)])
        assert build_distance_matrix(s).entries.tolist() == [[0.0]]

    def test_coincident(self):
        o = (0, (1, 0, 1), (1, 1, 1), 0.0)
        assert build_distance_matrix(make_scene([o, o])).entries[0, 1] == 0.0

    def test_formula(self):
        # unit footprints 9 m apart on a floor whose diagonal is 18 m
        floor = ((-9 / math.sqrt(2), -9 / math.sqrt(2)), (9 / math.sqrt(2), -9 / math.sqrt(2)),
                 (9 / math.sqrt(2), 9 / math.sqrt(2)), (-9 / math.sqrt(2), 9 / math.sqrt(2)))
        s = make_scene([(0, (0, 0, 0), (1, 1, 1), 0.0), (1, (9, 0, 0), (1, 1, 1), 0.0)], floor=floor)
        assert build_distance_matrix(s, lam=0.02).entries[0, 1] == pytest.approx(0.536)

    def test_empty_scene(self):
        with pytest.raises(ValueError, match="empty scene"):
            build_distance_matrix(make_scene([]))

    def test_lambda_zero_is_euclidean(self):
        s = make_scene([(0, (0, 0, 0), (1, 1, 1), 0.0), (1, (3, 0, 0), (1, 1, 1), 0.0)])
        m = build_distance_matrix(s, lam=0.0, normalization="none").entries
        assert m[0, 1] == pytest.approx(3.0)

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5), st.floats(0.2, 1.5),
                              st.floats(0.2, 1.5), st.floats(-3, 3)), min_size=1, max_size=6),
           st.floats(0.1, 10))
    def test_symmetric_and_scale_invariant(self, objs, k):
        def build(scale):
            rows = [(0, (x * scale, 0, z * scale), (w * scale, 1, d * scale), r) for x, z, w, d, r in objs]
            floor = tuple((a * scale, b * scale) for a, b in ((-3, -3), (3, -3), (3, 3), (-3, 3)))
            return build_distance_matrix(make_scene(rows, floor=floor)).entries

        m = build(1.0)
        assert np.allclose(m, m.T) and np.all(np.diag(m) == 0)
        assert np.allclose(build(k), m, atol=1e-9)
