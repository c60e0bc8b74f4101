import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sceneorder.data import GrammarSpec, Scene, generate_grammar_dataset  # noqa: E402
from sceneorder.geometry import SceneObject  # noqa: E402

SQUARE = ((-3.0, -3.0), (3.0, -3.0), (3.0, 3.0), (-3.0, 3.0))


def make_scene(objects, floor=SQUARE, classes=("a", "b", "c", "d"), scene_id="test"):
    objs = tuple(SceneObject(c, t, s, r) for c, t, s, r in objects)
    return Scene(objs, floor, classes, "room", scene_id)


@pytest.fixture
def make():
    return make_scene


@pytest.fixture(scope="session")
def grammar_scenes():
    return generate_grammar_dataset(GrammarSpec(seed=3), 60)


@pytest.fixture
def half_pi():
    return math.pi / 2


TINY = dict(hidden=24, heads=2, layers=2, vit_dim=16, vit_heads=2, vit_layers=1, vit_patch=8,
            mask_resolution=16, mixture_k=3, geometry_hidden=24, class_dim=64)


@pytest.fixture(scope="session")
def tiny_model(grammar_scenes):
    """Untrained small model wrapped with bounds and a raster frame for the grammar vocabulary."""
    from sceneorder.data import RasterFrame
    from sceneorder.model import ModelConfig, SceneModel, TrainedModel
    from sceneorder.model.train import fit_bounds
    cfg = ModelConfig(n_classes=len(grammar_scenes[0].classes), **TINY)
    model = SceneModel(cfg, seed=0)
    model.eval()
    frame = RasterFrame.from_scenes(grammar_scenes, cfg.mask_resolution)
    return TrainedModel(model, fit_bounds(grammar_scenes, "right_angle", 0.05),
                        grammar_scenes[0].classes, frame)


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str):
        CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
