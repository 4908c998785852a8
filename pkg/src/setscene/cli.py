"""Command-line entry points: data generation, training, sampling, metrics,
anomaly repair, and the HTTP server.

Datasets are directories of one scene JSON document per file; all outputs
are deterministic for a given seed, with sorted keys so repeated runs are
byte-identical.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import inference as inf
from . import model as md
from . import scenes as sc
from . import training as tr


def _dump(doc, out):
    text = json.dumps(doc, sort_keys=True, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def load_dataset(path):
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise sc.SchemaError(f"{path}: no scene JSON files found")
    return [sc.load_scene(f) for f in files]


def _rule_spec_from_json(doc, seed=None):
    kwargs = {}
    if "categories" in doc:
        kwargs["categories"] = tuple(doc["categories"])
    if "anchor" in doc:
        kwargs["anchor"] = doc["anchor"]
    if "satellites" in doc:
        kwargs["satellites"] = tuple(
            sc.SatelliteRule(s["category"], tuple(s["count_range"]), s["radius"])
            for s in doc["satellites"])
    if "extras" in doc:
        kwargs["extras"] = tuple(
            sc.ExtraRule(e["category"], e["probability"]) for e in doc["extras"])
    if "room_size_range" in doc:
        kwargs["room_size_range"] = tuple(doc["room_size_range"])
    if "ceiling" in doc:
        kwargs["ceiling"] = doc["ceiling"]
    kwargs["seed"] = seed if seed is not None else doc.get("seed", 0)
    return sc.ToyRuleSpec(**kwargs)


def cmd_gen_data(args):
    doc = json.loads(Path(args.spec).read_text()) if args.spec else {}
    spec = _rule_spec_from_json(doc, seed=args.seed)
    scenes = sc.generate_toy_dataset(spec, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(scenes):
        (out / f"{i:05d}.json").write_text(
            json.dumps(sc.scene_to_json(scene), sort_keys=True))
    print(f"wrote {len(scenes)} scenes to {out}")
    return 0


def _n_categories(scenes):
    return max(o.category for s in scenes for o in s.objects) + 1


def cmd_train(args):
    scenes = load_dataset(args.data)
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    model_kwargs = dict(doc.get("model", {}))
    model_kwargs.setdefault("n_categories", _n_categories(scenes))
    config = md.ModelConfig(**model_kwargs)
    train_cfg = tr.TrainConfig(**doc.get("train", {}))
    params = md.init_parameters(config, seed=doc.get("init_seed", 0))

    n_val = max(1, len(scenes) // 10)
    if len(scenes) <= n_val:
        raise ValueError("dataset too small to hold out a validation split")
    train_part, val_part = scenes[:-n_val], scenes[-n_val:]
    metrics_path = args.metrics or str(Path(args.out).with_suffix(".metrics.csv"))
    params, metrics = tr.train(train_part, params, train_cfg,
                               val_scenes=val_part, metrics_path=metrics_path)
    threshold = inf.calibrate_anomaly_threshold(params, val_part)
    md.save_checkpoint(params, args.out)
    print(f"saved {args.out}; best val nll "
          f"{params.metadata['best_val_nll']:.4f}, "
          f"anomaly threshold {threshold:.4f}")
    return 0


def _load_floor(path):
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        return sc.polygon_from_json(doc)
    if isinstance(doc, dict) and "floor_polygon" in doc:
        return sc.polygon_from_json(doc["floor_polygon"])
    raise sc.SchemaError(
        f"{path}: expected a vertex list or a document with floor_polygon")


def cmd_synthesize(args):
    params = md.load_checkpoint(args.ckpt)
    polygon = _load_floor(args.floor)
    res = inf.synthesize(polygon, params, np.random.default_rng(args.seed),
                         max_objects=args.max_objects,
                         temperature=args.temperature)
    doc = sc.scene_to_json(res.scene)
    if res.truncated:
        print("warning: generation hit the object cap", file=sys.stderr)
    _dump(doc, args.out)
    return 0


def cmd_complete(args):
    params = md.load_checkpoint(args.ckpt)
    scene = sc.load_scene(args.scene)
    res = inf.complete(scene, params, np.random.default_rng(args.seed),
                       max_objects=args.max_objects,
                       temperature=args.temperature)
    _dump(sc.scene_to_json(res.scene), args.out)
    return 0


def cmd_suggest(args):
    params = md.load_checkpoint(args.ckpt)
    scene = sc.load_scene(args.scene)
    vals = [float(v) for v in args.box.split(",")]
    if len(vals) != 6:
        raise ValueError("--box needs xmin,xmax,ymin,ymax,zmin,zmax")
    box = np.asarray(vals, dtype=float).reshape(3, 2)
    out = inf.suggest(scene, box, params, np.random.default_rng(args.seed),
                      temperature=args.temperature)
    _dump({"suggestion": None if out is None else sc.object_to_json(out)},
          args.out)
    return 0


def cmd_detect(args):
    params = md.load_checkpoint(args.ckpt)
    scene = sc.load_scene(args.scene)
    corrected, report = inf.detect_and_correct(
        scene, params, np.random.default_rng(args.seed),
        threshold=args.threshold)
    _dump({
        "scene": sc.scene_to_json(corrected),
        "report": {
            "scores": report.scores,
            "threshold": report.threshold,
            "flagged": report.flagged,
            "corrections": [c.__dict__ for c in report.corrections],
        },
    }, args.out)
    return 0


def cmd_evaluate(args):
    gen = load_dataset(args.gen)
    ref = load_dataset(args.ref)
    n = args.categories or max(_n_categories(gen), _n_categories(ref))
    _dump(ev.metric_report(gen, ref, n), args.out)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(args.ckpt), host=args.host, port=args.port)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="setscene",
                                description="autoregressive set-model toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    g.add_argument("--spec", help="rule spec JSON file (defaults built in)")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True, help="output dataset directory")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON with model/train override sections")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--metrics", help="metrics CSV path")
    t.set_defaults(fn=cmd_train)

    def sampling_flags(q, scene_input):
        q.add_argument("--ckpt", required=True)
        if scene_input:
            q.add_argument("--scene", required=True, help="scene JSON file")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--temperature", type=float, default=1.0)
        q.add_argument("--out", help="output file (stdout if omitted)")

    s = sub.add_parser("synthesize", help="generate a scene on a floor")
    s.add_argument("--floor", required=True,
                   help="JSON file: vertex list or {floor_polygon: ...}")
    sampling_flags(s, scene_input=False)
    s.add_argument("--max-objects", type=int, default=30)
    s.set_defaults(fn=cmd_synthesize)

    c = sub.add_parser("complete", help="fill in a partial scene")
    sampling_flags(c, scene_input=True)
    c.add_argument("--max-objects", type=int, default=30)
    c.set_defaults(fn=cmd_complete)

    u = sub.add_parser("suggest", help="suggest an object inside a box")
    sampling_flags(u, scene_input=True)
    u.add_argument("--box", required=True,
                   help="xmin,xmax,ymin,ymax,zmin,zmax "
                        "(write --box=... when values are negative)")
    u.set_defaults(fn=cmd_suggest)

    d = sub.add_parser("detect", help="flag and reposition anomalous objects")
    sampling_flags(d, scene_input=True)
    d.add_argument("--threshold", type=float, default=None,
                   help="override the calibrated likelihood threshold")
    d.set_defaults(fn=cmd_detect)

    e = sub.add_parser("evaluate", help="compare two dataset directories")
    e.add_argument("--gen", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--categories", type=int, default=None)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    v = sub.add_parser("serve", help="run the HTTP service")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--port", type=int, default=8000)
    v.add_argument("--host", default="127.0.0.1")
    v.set_defaults(fn=cmd_serve)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (sc.SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
