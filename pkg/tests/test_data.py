import json
import math

import numpy as np
import pytest

from sceneorder.data import (GrammarSpec, RasterFrame, SchemaError, from_document, generate_grammar_dataset,
                             load_scene, load_scenes, load_vocabulary, polygon_area, rasterize_floor,
                             rotate_scene, save_scene, save_scenes, save_vocabulary, split_dataset, to_document)
from sceneorder.metrics import diversity
from sceneorder.ordering import SceneTree, parse_scene

MINIMAL = {"scene_id": "s1", "room_type": "bedroom", "floor": [[0, 0], [4, 0], [4, 3], [0, 3]],
           "objects": [{"class": "bed", "t": [2.0, 0.25, 1.5], "b": [1.6, 0.5, 2.0], "r": 0.0}]}


class TestSceneIO:
    def test_roundtrip_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_scene(p1, from_document(MINIMAL))
        save_scene(p2, load_scene(p1))
        assert p1.read_bytes() == p2.read_bytes()
        assert to_document(load_scene(p1)) == MINIMAL

    def test_two_vertex_floor(self):
        with pytest.raises(SchemaError) as err:
            from_document({**MINIMAL, "floor": [[0, 0], [1, 0]]})
        assert err.value.path == "floor"

    def test_negative_size_names_path(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["objects"][0]["b"][1] = -1
        with pytest.raises(SchemaError) as err:
            from_document(doc)
        assert err.value.path == "objects[0].b"

    def test_self_intersecting_floor(self):
        with pytest.raises(SchemaError):
            from_document({**MINIMAL, "floor": [[0, 0], [2, 2], [2, 0], [0, 2]]})

    @pytest.mark.parametrize("patch, path", [({"room_type": 3}, "room_type"),
                                             ({"objects": {}}, "objects"),
                                             ({"ground_truth_tree": {"0": 5}}, "ground_truth_tree.0")])
    def test_schema_paths(self, patch, path):
        with pytest.raises(SchemaError) as err:
            from_document({**MINIMAL, **patch})
        assert err.value.path == path

    def test_corpus_formats(self, tmp_path, grammar_scenes):
        subset = grammar_scenes[:5]
        for name in ("c.ndjson", "c.json"):
            save_scenes(tmp_path / name, subset)
            back = load_scenes(tmp_path / name, subset[0].classes)
            assert [to_document(s) for s in back] == [to_document(s) for s in subset]
        save_vocabulary(tmp_path / "v.json", subset[0].classes)
        assert load_vocabulary(tmp_path / "v.json") == subset[0].classes


class TestRaster:
    def test_full_square(self):
        sq = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
        m = rasterize_floor(sq, RasterFrame(1.0, 64))
        assert m.shape == (64, 64) and m.mean() > 0.9

    def test_rotation_symmetry(self):
        poly = [(-2, -1), (3, -1), (3, 2), (0, 2), (0, 1), (-2, 1)]
        frame = RasterFrame(4.0, 64)
        rotated = [(-z, x) for x, z in poly]          # +90 degrees about y
        m0 = rasterize_floor(poly, frame)
        m1 = rasterize_floor(rotated, frame)
        assert np.array_equal(m1, np.rot90(m0, k=-1)) or np.array_equal(m1, np.rot90(m0, k=1))

    def test_l_shape_area(self):
        ell = [(-3, -3), (3, -3), (3, 0), (0, 0), (0, 3), (-3, 3)]
        frame = RasterFrame(3.2, 64)
        m = rasterize_floor(ell, frame)
        cells = polygon_area(ell) / frame.cell_size ** 2
        perimeter_cells = 24 / frame.cell_size
        assert abs(m.sum() - cells) <= 2 * perimeter_cells

    def test_degenerate(self):
        with pytest.raises(ValueError):
            rasterize_floor([(0, 0), (1, 1), (2, 2)])

    def test_rotate_scene_quarter_turn(self, grammar_scenes):
        s = grammar_scenes[0]
        back = rotate_scene(rotate_scene(s, math.pi / 2), -math.pi / 2)
        for a, b in zip(s.objects, back.objects):
            assert np.allclose(a.translation, b.translation)


class TestSplit:
    def test_sizes_and_partition(self):
        items = list(range(100))
        parts = split_dataset(items, (0.8, 0.1, 0.1), seed=1)
        assert [len(parts[k]) for k in ("train", "val", "test")] == [80, 10, 10]
        assert sorted(parts["train"] + parts["val"] + parts["test"]) == items
        assert split_dataset(items, seed=1) == parts

    def test_empty_split(self):
        with pytest.raises(ValueError):
            split_dataset(list(range(3)), (0.9, 0.1, 0.0))


class TestGrammar:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        save_scenes(a, generate_grammar_dataset(GrammarSpec(seed=9), 20))
        save_scenes(b, generate_grammar_dataset(GrammarSpec(seed=9), 20))
        assert a.read_bytes() == b.read_bytes()

    def test_ground_truth_trees_valid(self, grammar_scenes):
        for s in grammar_scenes:
            tree = SceneTree(s.ground_truth_tree, len(s.objects))
            assert tree.is_complete
            for v, p in tree.parent.items():
                if p != -1:
                    assert s.objects[p].volume > s.objects[v].volume

    def test_objects_inside_and_disjoint(self, grammar_scenes):
        from sceneorder.metrics import scene_quality
        for s in grammar_scenes:
            q = scene_quality(s)
            assert q["out_of_bounds_rate"] == 0.0 and q["pairwise_overlap_rate"] == 0.0

    def test_no_outliers_single_tree_forest(self):
        scenes = generate_grammar_dataset(GrammarSpec(seed=2, outlier_rate=0.0), 40)
        assert all(diversity(parse_scene(s).forest) == 1 for s in scenes)

    def test_room_size_grid(self, grammar_scenes):
        sizes = {round(2 * abs(x), 6) for s in grammar_scenes for x, _ in s.floor}
        assert sizes <= {7.0, 8.0, 9.0}

    def test_invalid_spec(self):
        from sceneorder.data import ZoneTemplate
        with pytest.raises(ValueError):
            GrammarSpec(zones=(ZoneTemplate("sofa", {"armchair": 0.5}, (1, 2), 1.0),))
        with pytest.raises(ValueError):
            GrammarSpec(outlier_rate=1.5)
