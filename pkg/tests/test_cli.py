import json
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sceneorder.cli import main
from sceneorder.data import load_scenes, save_scene


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run("generate", "--count", 60, "--seed", 4, "--split", 0.8, 0.1, 0.1, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def scenes(dataset):
    return load_scenes(dataset / "scenes.ndjson")


@pytest.fixture(scope="module")
def forest_scene(scenes, tmp_path_factory):
    from sceneorder.ordering import parse_scene
    scene = next(s for s in scenes if len(parse_scene(s).forest) > 1)
    path = tmp_path_factory.mktemp("scene") / "scene.json"
    save_scene(path, scene)
    return path


@pytest.fixture(scope="module")
def checkpoint(dataset, scenes, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    t0 = time.perf_counter()
    code = run("train", "--data", dataset / "scenes.ndjson", "--epochs", 5, "--batch", 8,
               "--eval-every", 5, "--seed", 0, "--out", out)
    elapsed = time.perf_counter() - t0
    assert code == 0
    assert elapsed < 300, f"training took {elapsed:.0f}s"
    return out


def test_generate_outputs(dataset):
    assert len(load_scenes(dataset / "scenes.ndjson")) == 60
    sizes = [len(load_scenes(dataset / f"{p}.ndjson")) for p in ("train", "val", "test")]
    assert sizes == [48, 6, 6]
    assert (dataset / "vocabulary.json").exists() and (dataset / "run_config.json").exists()


class TestParse:
    def test_defaults_recorded(self, forest_scene, tmp_path):
        assert run("parse", forest_scene, "--out", tmp_path) == 0
        cfg = json.loads((tmp_path / "run_config.json").read_text())
        assert (cfg["lam"], cfg["eps"], cfg["min_samples"]) == (0.02, 0.15, 2)
        assert (tmp_path / "forest.json").exists() and (tmp_path / "forest.dot").exists()

    def test_tree_mode_and_lambda_zero(self, forest_scene, tmp_path):
        assert run("parse", forest_scene, "--tree", "--lambda", 0, "--out", tmp_path) == 0
        assert json.loads((tmp_path / "run_config.json").read_text())["lam"] == 0.0
        assert (tmp_path / "tree.json").exists()

    def test_repeatable(self, forest_scene, tmp_path):
        for d in ("a", "b"):
            assert run("parse", forest_scene, "--seed", 1, "--out", tmp_path / d) == 0
        for name in ("forest.json", "forest.dot", "clusters.json", "run_config.json"):
            a, b = (tmp_path / d / name for d in "ab")
            if name == "run_config.json":
                da, db = json.loads(a.read_text()), json.loads(b.read_text())
                da.pop("out"), db.pop("out")
                assert da == db
            else:
                assert a.read_bytes() == b.read_bytes()

    def test_missing_file(self, tmp_path, capsys):
        assert run("parse", tmp_path / "nope.json", "--out", tmp_path) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_schema_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"scene_id": "x", "room_type": "bedroom", "floor": [[0, 0], [1, 0]], "objects": []}))
        assert run("parse", bad, "--out", tmp_path / "o") == 1
        assert "floor" in capsys.readouterr().err


@pytest.fixture(scope="module")
def forest_json(forest_scene, tmp_path_factory):
    out = tmp_path_factory.mktemp("forest")
    assert run("parse", forest_scene, "--out", out) == 0
    return out / "forest.json"


class TestOrder:
    def _stats(self, path):
        return json.loads(path.read_text())["stats"]

    def test_random_single_constant(self, forest_json, tmp_path):
        assert run("order", forest_json, "--strategy", "random_single", "--count", 7, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "sequences.json").read_text())
        assert doc["stats"]["inconsistency"] == 0.0
        assert len({tuple(s["order"]) for s in doc["sequences"]}) == 1

    def test_sequence_format(self, forest_json, tmp_path):
        assert run("order", forest_json, "--count", 3, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "sequences.json").read_text())
        names = json.loads(forest_json.read_text())["classes"]
        for s in doc["sequences"]:
            assert sorted(s["order"]) == list(range(len(names)))
            assert s["classes"] == [names[i] for i in s["order"]]

    def test_bfs_not_worse_than_dfs(self, forest_json, tmp_path):
        means = {}
        for strategy in ("forest_bfs", "forest_dfs"):
            vals = []
            for seed in range(100):
                out = tmp_path / f"{strategy}{seed}"
                assert run("order", forest_json, "--strategy", strategy, "--seed", seed, "--out", out) == 0
                vals.append(self._stats(out / "sequences.json")["inconsistency"])
            means[strategy] = np.mean(vals)
        assert means["forest_bfs"] <= means["forest_dfs"]

    def test_incompatible_strategy(self, forest_json, tmp_path):
        assert run("order", forest_json, "--strategy", "fixed", "--out", tmp_path) == 1


class TestModelCommands:
    def test_train_outputs(self, checkpoint):
        for name in ("model.ckpt", "learning_curve.csv", "learning_curve.png", "run_config.json"):
            assert (checkpoint / name).exists()

    def test_sample_seed_repeatable(self, checkpoint, dataset, tmp_path):
        for d in ("a", "b"):
            assert run("sample", "--checkpoint", checkpoint / "model.ckpt", "--floors",
                       dataset / "test.ndjson", "--count", 3, "--max-len", 8, "--seed", 7,
                       "--out", tmp_path / d) == 0
        a, b = ((tmp_path / d / "samples.ndjson").read_bytes() for d in "ab")
        assert a == b and len(a.splitlines()) == 3

    def test_seed_from_environment(self, checkpoint, dataset, tmp_path, monkeypatch):
        monkeypatch.setenv("F2S_SEED", "11")
        assert run("sample", "--checkpoint", checkpoint / "model.ckpt", "--floors", dataset / "test.ndjson",
                   "--max-len", 4, "--out", tmp_path) == 0
        assert json.loads((tmp_path / "run_config.json").read_text())["seed"] == 11

    def test_complete_and_rearrange(self, checkpoint, forest_scene, tmp_path):
        ck = checkpoint / "model.ckpt"
        assert run("complete", "--checkpoint", ck, "--scene", forest_scene, "--keep", 2, "--out", tmp_path) == 0
        assert (tmp_path / "completed.json").exists()
        assert run("rearrange", "--checkpoint", ck, "--scene", forest_scene, "--targets", "0,1",
                   "--out", tmp_path) == 0
        assert (tmp_path / "rearranged.json").exists()

    def test_missing_checkpoint(self, forest_scene, tmp_path, capsys):
        assert run("complete", "--checkpoint", tmp_path / "none.ckpt", "--scene", forest_scene,
                   "--out", tmp_path) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_targets(self, checkpoint, forest_scene, tmp_path):
        assert run("rearrange", "--checkpoint", checkpoint / "model.ckpt", "--scene", forest_scene,
                   "--targets", "99", "--out", tmp_path) == 1


class TestEval:
    def test_identical_sets_zero_kl(self, dataset, tmp_path, capsys):
        data = dataset / "val.ndjson"
        assert run("eval", "--generated", data, "--reference", data, "--out", tmp_path) == 0
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["class_kl"] == 0.0 and m["class_kl_x100"] == 0.0
        assert m["ahd"] >= 0.0
        for name in ("class_histogram.csv", "class_histogram.png", "run_config.json"):
            assert (tmp_path / name).exists()


class TestRenderAndConfig:
    def test_render_deterministic_and_valid(self, forest_scene, tmp_path):
        assert run("render", forest_scene, "--out", tmp_path / "a.svg") == 0
        assert run("render", forest_scene, "--out", tmp_path / "b.svg") == 0
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        ET.fromstring((tmp_path / "a.svg").read_bytes())
        assert (tmp_path / "a.run_config.json").exists()

    def test_json_config_overrides(self, forest_scene, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"lambda": 0.5, "eps": 0.2}))
        assert run("parse", forest_scene, "--config", cfg, "--lambda", 0.1, "--out", tmp_path / "o") == 0
        rc = json.loads((tmp_path / "o" / "run_config.json").read_text())
        assert (rc["lam"], rc["eps"]) == (0.5, 0.2)

    def test_key_value_config(self, forest_scene, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# parse settings\nmin-samples = 3\nnormalization = none\n")
        assert run("parse", forest_scene, "--config", cfg, "--out", tmp_path / "o") == 0
        rc = json.loads((tmp_path / "o" / "run_config.json").read_text())
        assert (rc["min_samples"], rc["normalization"]) == (3, "none")

    def test_unknown_config_key(self, forest_scene, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"epochs": 3}))
        assert run("parse", forest_scene, "--config", cfg, "--out", tmp_path / "o") == 1
        assert "epochs" in capsys.readouterr().err
