"""Command-line interface: ``sceneorder <subcommand> ...``.

Every subcommand is deterministic given its flags and seed, and records the
resolved configuration as ``run_config.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .data import (GrammarSpec, SchemaError, generate_grammar_dataset, load_scene, load_scenes,
                   load_vocabulary, save_scene, save_scenes, save_vocabulary, split_dataset)
from .geometry import DEFAULT_LAMBDA
from .metrics import ahd, categorical_kl, class_distribution, dataset_quality, diversity, inconsistency
from .numerics.checkpoint import CheckpointError
from .ordering import (DEFAULT_EPS, DEFAULT_MIN_SAMPLES, OrderedSequence, SceneForest, SceneTree, Strategy,
                       linearize, make_ordering, parse_scene, sample_tree)
from .render import render_svg

SEED_ENV = "F2S_SEED"


class CliError(Exception):
    pass


# -- shared plumbing -----------------------------------------------------------------

def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_run_config(directory: Path, args: argparse.Namespace, name: str = "run_config.json"):
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    cfg["version"] = __version__
    directory.mkdir(parents=True, exist_ok=True)
    (directory / name).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _vocabulary_for(data_path: Path, explicit: Path | None):
    if explicit is not None:
        return load_vocabulary(explicit)
    beside = (data_path if data_path.is_dir() else data_path.parent) / "vocabulary.json"
    return load_vocabulary(beside) if beside.exists() else None


def _load_checkpoint(path: Path):
    from .model import load
    if not path.exists():
        raise CliError(f"checkpoint not found: {path}")
    return load(path)


# -- subcommands -------------------------------------------------------------------------

def cmd_generate(args) -> None:
    spec = GrammarSpec(seed=args.seed, outlier_rate=args.outlier_rate)
    scenes = generate_grammar_dataset(spec, args.count)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_scenes(out / "scenes.ndjson", scenes)
    save_vocabulary(out / "vocabulary.json", spec.classes)
    if args.split:
        parts = split_dataset(scenes, tuple(args.split), seed=args.seed)
        for name, part in parts.items():
            save_scenes(out / f"{name}.ndjson", part)
    write_run_config(out, args)
    print(f"wrote {len(scenes)} scenes to {out}")


def cmd_parse(args) -> None:
    scene = load_scene(args.scene)
    parsed = parse_scene(scene, lam=args.lam, eps=args.eps, min_samples=args.min_samples,
                         normalization=args.normalization, pseudocode_literal=args.pseudocode_literal)
    names = scene.class_names
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.tree:
        tree = parsed.single_tree()
        _write_json(out / "tree.json", tree.to_json(names))
        (out / "tree.dot").write_text(tree.to_dot(names))
    else:
        _write_json(out / "forest.json", parsed.forest.to_json(names))
        (out / "forest.dot").write_text(parsed.forest.to_dot(names))
    _write_json(out / "clusters.json", {"labels": [int(v) for v in parsed.labels],
                                        "outliers": list(parsed.outliers)})
    write_run_config(out, args)
    print(f"{len(scene.objects)} objects, {int(parsed.labels.max(initial=-1)) + 1} clusters, "
          f"{len(parsed.outliers)} outliers, forest size {parsed.forest.full_size}")


def _order_structure(doc):
    if "base" in doc:
        return SceneForest.from_json(doc)
    if "tree" in doc:
        return SceneTree.from_json(doc)
    return None


def _structure_seed(doc) -> int:
    return zlib.crc32(json.dumps(doc, sort_keys=True).encode())


def cmd_order(args) -> None:
    doc = json.loads(Path(args.input).read_text())
    strategy = Strategy.parse(args.strategy)
    structure = _order_structure(doc)
    seeds = np.random.SeedSequence(args.seed).spawn(args.count)
    seqs: list[OrderedSequence] = []
    if structure is None:
        scene = load_scene(args.input)
        names = scene.class_names
        class_ids = [o.class_id for o in scene.objects]
        parsed = parse_scene(scene)
        forest_size = len(parsed.forest)
        for sq in seeds:
            seq = make_ordering(scene, strategy, np.random.default_rng(sq), parsed=parsed)
            if args.traversal and strategy in (Strategy.TREE_BFS, Strategy.FOREST_BFS, Strategy.FOREST_DFS):
                rng = np.random.default_rng(sq)
                tree = parsed.single_tree() if strategy is Strategy.TREE_BFS else sample_tree(parsed.forest, rng)
                seq = linearize(tree, args.traversal, rng, strategy)
            seqs.append(seq)
    else:
        names = doc.get("classes")
        if names is None:
            raise CliError("tree/forest input must list per-object class names under 'classes'")
        labels = sorted(set(names))
        class_ids = [labels.index(c) for c in names]
        n = structure.n_objects if isinstance(structure, SceneTree) else structure.base.n_objects
        is_forest = isinstance(structure, SceneForest)
        forest_size = len(structure) if is_forest else 1
        if strategy is Strategy.FIXED:
            raise CliError("the fixed strategy needs scene geometry; pass a scene JSON instead")
        if strategy in (Strategy.FOREST_BFS, Strategy.FOREST_DFS) and not is_forest:
            raise CliError(f"strategy {strategy.value} needs a forest; got a tree")
        if strategy is Strategy.TREE_BFS and is_forest:
            structure = SceneTree({**structure.base.parent, **{o: -1 for o in structure.outliers}},
                                  structure.base.n_objects, structure.base.heads)
            forest_size = 1
        for sq in seeds:
            rng = np.random.default_rng(sq)
            if strategy is Strategy.RANDOM_SINGLE:
                s = _structure_seed(doc)
                seqs.append(OrderedSequence(tuple(np.random.default_rng(s).permutation(n)), strategy, s))
            elif strategy is Strategy.RANDOM_MULTIPLE:
                seqs.append(OrderedSequence(tuple(rng.permutation(n)), strategy, None))
            else:
                tree = sample_tree(structure, rng) if isinstance(structure, SceneForest) else structure
                default = "dfs" if strategy is Strategy.FOREST_DFS else "bfs"
                seqs.append(linearize(tree, args.traversal or default, rng, strategy))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    records = [{"index": k, "order": list(s.order), "classes": [names[i] for i in s.order]}
               for k, s in enumerate(seqs)]
    stats = {"strategy": strategy.value, "count": len(seqs), "diversity": forest_size,
             "inconsistency": inconsistency(seqs, class_ids) if seqs else 0.0}
    _write_json(out / "sequences.json", {"stats": stats, "sequences": records})
    write_run_config(out, args)
    print(json.dumps(stats))


def _floors(path: Path):
    scenes = load_scenes(path)
    if not scenes:
        raise CliError(f"no scenes in {path}")
    return scenes


def cmd_train(args) -> None:
    from .model import ModelConfig, TrainConfig, save, train, write_learning_curve
    from .plotting import plot_learning_curve
    vocab = _vocabulary_for(args.data, args.vocab)
    scenes = load_scenes(args.data, vocab)
    val = load_scenes(args.val, scenes[0].classes) if args.val else None
    mc = ModelConfig.from_dict({"n_classes": len(scenes[0].classes), **(args.model_config or {})})
    tc = TrainConfig(batch_size=args.batch, epochs=args.epochs, lr=args.lr, seed=args.seed,
                     strategy=args.strategy, augmentation=args.augmentation, eval_every=args.eval_every,
                     max_steps=args.max_steps)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        if r.val_nll is not None:
            print(f"epoch {r.epoch} step {r.step} train {r.train_nll:.3f} val {r.val_nll:.3f}", flush=True)

    res = train(scenes, val, mc, tc, progress=progress)
    save(out / "model.ckpt", res.trained)
    write_learning_curve(out / "learning_curve.csv", res.history)
    plot_learning_curve(res.history, out / "learning_curve.png")
    write_run_config(out, args)
    print(f"best epoch {res.best_epoch}, validation NLL {res.best_val_nll:.4f}")


def cmd_sample(args) -> None:
    from .model import sample_scene
    tm = _load_checkpoint(args.checkpoint)
    floors = _floors(args.floors)
    rng = np.random.default_rng(args.seed)
    out_scenes, truncated = [], 0
    for i in range(args.count):
        src = floors[i % len(floors)]
        res = sample_scene(tm, src.floor, rng, args.temperature, args.max_len, src.room_type, f"sample-{i:05d}")
        out_scenes.append(res.scene)
        truncated += res.truncated
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_scenes(out / "samples.ndjson", out_scenes)
    write_run_config(out, args)
    print(f"wrote {len(out_scenes)} scenes ({truncated} truncated)")


def cmd_complete(args) -> None:
    from .model import complete_scene
    tm = _load_checkpoint(args.checkpoint)
    scene = load_scene(args.scene, tm.classes)
    if args.keep < 0 or args.keep > len(scene.objects):
        raise CliError(f"--keep must lie in [0, {len(scene.objects)}]")
    rng = np.random.default_rng(args.seed)
    res = complete_scene(tm, scene.floor, scene.objects[:args.keep], rng, args.temperature,
                         room_type=scene.room_type, scene_id=scene.scene_id)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_scene(out / "completed.json", res.scene)
    write_run_config(out, args)
    print(f"kept {args.keep}, generated {len(res.scene.objects) - args.keep} objects")


def cmd_rearrange(args) -> None:
    from .model import rearrange
    tm = _load_checkpoint(args.checkpoint)
    scene = load_scene(args.scene, tm.classes)
    rng = np.random.default_rng(args.seed)
    result = rearrange(tm, scene, args.targets, rng)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_scene(out / "rearranged.json", result)
    write_run_config(out, args)
    print(f"rearranged {len(args.targets)} objects")


def cmd_eval(args) -> None:
    from .plotting import plot_class_histogram
    ref_raw = load_scenes(args.reference)
    gen_raw = load_scenes(args.generated)
    vocab = sorted(set(ref_raw[0].classes if ref_raw else ()) | set(gen_raw[0].classes if gen_raw else ()))
    ref = load_scenes(args.reference, vocab)
    gen = load_scenes(args.generated, vocab)
    if not ref or not gen:
        raise CliError("both scene sets must be non-empty")
    p = class_distribution(ref, len(vocab))
    q = class_distribution(gen, len(vocab))
    metrics = {
        "n_reference": len(ref), "n_generated": len(gen),
        "class_kl": categorical_kl(p, q),
        "class_kl_x100": 100.0 * categorical_kl(p, q),
        "generated": dataset_quality(gen),
        "reference": dataset_quality(ref),
        "mean_objects": {"reference": float(np.mean([len(s.objects) for s in ref])),
                         "generated": float(np.mean([len(s.objects) for s in gen]))},
    }
    with_truth = [s for s in gen if s.ground_truth_tree is not None and s.objects]
    if with_truth:
        scores = []
        for s in with_truth:
            truth = SceneTree(dict(s.ground_truth_tree), len(s.objects))
            scores.append(ahd(parse_scene(s, lam=args.lam).single_tree(), truth))
        metrics["ahd"] = float(np.mean(scores))
        metrics["diversity"] = float(np.mean([diversity(parse_scene(s, lam=args.lam).forest) for s in with_truth]))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", metrics)
    with open(out / "class_histogram.csv", "w") as fh:
        fh.write("class,reference,generated\n")
        for name, a, b in zip(vocab, p, q):
            fh.write(f"{name},{a!r},{b!r}\n")
    plot_class_histogram(vocab, p, q, out / "class_histogram.png")
    write_run_config(out, args)
    print(json.dumps(metrics))


def cmd_render(args) -> None:
    scene = load_scene(args.scene)
    out = args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_svg(scene))
    write_run_config(out.parent, args, name=f"{out.stem}.run_config.json")
    print(f"wrote {out}")


# -- argument parsing ------------------------------------------------------------------

def _csv_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _json_object(text: str) -> dict:
    try:
        v = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None
    if not isinstance(v, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sceneorder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or key=value file whose keys override command-line flags")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV} or 0)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample scenes from the room grammar")
    g.add_argument("--count", type=int, default=500)
    g.add_argument("--outlier-rate", type=float, default=GrammarSpec.outlier_rate)
    g.add_argument("--split", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("parse", parents=[common], help="cluster a scene and build its tree or forest")
    s.add_argument("scene", type=Path)
    s.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--min-samples", type=int, default=DEFAULT_MIN_SAMPLES)
    s.add_argument("--normalization", choices=("diagonal", "none"), default="diagonal")
    s.add_argument("--pseudocode-literal", action="store_true")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--forest", dest="tree", action="store_false", help="write the forest (default)")
    mode.add_argument("--tree", dest="tree", action="store_true", help="write the single tree")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_parse, tree=False)

    o = sub.add_parser("order", parents=[common], help="linearise a tree, forest or scene into sequences")
    o.add_argument("input", type=Path, help="tree.json, forest.json or a scene JSON")
    o.add_argument("--strategy", default="forest_bfs",
                   help="random_single, fixed, tree_bfs, random_multiple, forest_dfs or forest_bfs")
    o.add_argument("--traversal", choices=("bfs", "dfs"), default=None)
    o.add_argument("--count", type=int, default=10)
    o.add_argument("--out", type=Path, required=True)
    o.set_defaults(func=cmd_order)

    t = sub.add_parser("train", parents=[common], help="train a generator")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--val", type=Path)
    t.add_argument("--vocab", type=Path)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--eval-every", type=int, default=10)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--strategy", default="forest_bfs")
    t.add_argument("--augmentation", choices=("none", "right_angle", "continuous"), default="right_angle")
    t.add_argument("--model-config", type=_json_object, help="JSON object of model overrides")
    t.add_argument("--out", type=Path, required=True)
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("sample", cmd_sample, "generate scenes for given floors"),
                                 ("complete", cmd_complete, "complete a partial scene"),
                                 ("rearrange", cmd_rearrange, "resample positions of chosen objects")):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("--checkpoint", type=Path, required=True)
        q.add_argument("--out", type=Path, required=True)
        if name != "rearrange":
            q.add_argument("--temperature", type=float, default=1.0)
        q.set_defaults(func=func)
        if name == "sample":
            q.add_argument("--floors", type=Path, required=True, help="scene file(s) supplying floor polygons")
            q.add_argument("--count", type=int, default=1)
            q.add_argument("--max-len", type=int)
        elif name == "complete":
            q.add_argument("--scene", type=Path, required=True)
            q.add_argument("--keep", type=int, default=1, help="number of leading objects kept")
        else:
            q.add_argument("--scene", type=Path, required=True)
            q.add_argument("--targets", type=_csv_ints, required=True, help="comma-separated object indices")

    e = sub.add_parser("eval", parents=[common], help="compare generated scenes with a reference set")
    e.add_argument("--generated", type=Path, required=True)
    e.add_argument("--reference", type=Path, required=True)
    e.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", parents=[common], help="draw a scene as a top-down SVG")
    r.add_argument("scene", type=Path)
    r.add_argument("--out", type=Path, required=True)
    r.set_defaults(func=cmd_render)
    return p


def _read_config(text: str):
    """A JSON object, or ``key = value`` lines whose values are read as JSON when possible."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {n}: expected key = value")
        value = value.strip()
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out


def _apply_config(args: argparse.Namespace):
    if not getattr(args, "config", None):
        return
    try:
        overrides = _read_config(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(overrides, dict):
        raise CliError("config file must hold a JSON object")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if dest in ("func", "command") or not hasattr(args, dest):
            raise CliError(f"config key {key!r} is not a flag of '{args.command}'")
        current = getattr(args, dest)
        if isinstance(current, Path) or dest in ("out", "data", "val", "vocab", "checkpoint", "floors",
                                                 "scene", "input", "generated", "reference"):
            value = Path(value)
        setattr(args, dest, value)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        args.seed = resolve_seed(args.seed)
        args.func(args)
    except (CliError, SchemaError, CheckpointError, ValueError, KeyError, IndexError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
