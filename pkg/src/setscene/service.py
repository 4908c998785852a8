"""HTTP/JSON service over a loaded checkpoint.

All request bodies and responses use the scene document schema. Schema
violations return 400 with the offending field path; domain errors (bad
category, degenerate box, uncalibrated checkpoint, self-intersecting
polygon) return 422. Seeds are client-supplied so any response can be
reproduced exactly; without one the server draws a seed and echoes it back.
The checkpoint is immutable after startup, so requests are independent.
"""

import logging
import os

import numpy as np
from fastapi import Body, FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import inference as inf
from . import model as md
from . import scenes as sc

log = logging.getLogger("setscene.service")

DEFAULT_MAX_OBJECTS = 30


def _configure_logging():
    level_name = os.environ.get("ATISS_LOG", "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level)
    log.setLevel(level)


def _field(payload, name):
    if name not in payload:
        raise sc.SchemaError(f"{name}: missing required field")
    return payload[name]


def _seeded_rng(payload):
    seed = payload.get("seed")
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "big") >> 1
    elif isinstance(seed, bool) or not isinstance(seed, int):
        raise sc.SchemaError("seed: expected an integer")
    return seed, np.random.default_rng(seed)


def _number_field(payload, name, default):
    v = payload.get(name, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise sc.SchemaError(f"{name}: expected a number")
    return float(v)


def _int_field(payload, name, default):
    v = payload.get(name, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise sc.SchemaError(f"{name}: expected an integer")
    return v


def _scene_field(payload):
    return sc.scene_from_json(_field(payload, "scene"))


def _box_field(payload):
    doc = _field(payload, "constraint_box")
    if not isinstance(doc, dict):
        raise sc.SchemaError("constraint_box: expected {min: [x,y,z], max: [x,y,z]}")
    lo = sc._number_list(doc, "min", 3, "constraint_box")
    hi = sc._number_list(doc, "max", 3, "constraint_box")
    return np.array([lo, hi], dtype=float).T  # (3, 2)


def create_app(params):
    """Build the FastAPI app around a Parameters object or checkpoint path."""
    if isinstance(params, (str, os.PathLike)):
        params = md.load_checkpoint(params)
    _configure_logging()
    cfg = params.config
    app = FastAPI(title="setscene")

    @app.exception_handler(sc.SchemaError)
    def _schema_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    def _domain_error(request, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(RequestValidationError)
    def _body_error(request, exc):
        return JSONResponse(status_code=400,
                            content={"error": "body: expected a JSON object"})

    @app.get("/meta")
    def meta():
        labels = params.metadata.get("category_labels") or [
            f"category_{i}" for i in range(cfg.n_categories)]
        return {
            "categories": labels,
            "n_categories": cfg.n_categories,
            "room_type": params.metadata.get("room_type"),
            "likelihood_threshold": params.metadata.get("likelihood_p5"),
            "max_objects": DEFAULT_MAX_OBJECTS,
            "config": {
                "d_model": cfg.d_model,
                "n_layers": cfg.n_layers,
                "n_heads": cfg.n_heads,
                "d_ff": cfg.d_ff,
                "mixture_components": cfg.mixture_components,
                "octaves": cfg.octaves,
                "floor_resolution": cfg.floor_resolution,
                "ordering_mode": cfg.ordering_mode,
            },
        }

    @app.post("/synthesize")
    def synthesize(payload: dict = Body(...)):
        polygon = sc.polygon_from_json(_field(payload, "floor_polygon"))
        seed, rng = _seeded_rng(payload)
        res = inf.synthesize(
            polygon, params, rng,
            max_objects=_int_field(payload, "max_objects", DEFAULT_MAX_OBJECTS),
            temperature=_number_field(payload, "temperature", 1.0))
        log.debug("synthesize: %d objects, truncated=%s",
                  len(res.scene.objects), res.truncated)
        return {"scene": sc.scene_to_json(res.scene),
                "truncated": res.truncated, "seed": seed}

    @app.post("/complete")
    def complete(payload: dict = Body(...)):
        scene = _scene_field(payload)
        seed, rng = _seeded_rng(payload)
        res = inf.complete(
            scene, params, rng,
            max_objects=_int_field(payload, "max_objects", DEFAULT_MAX_OBJECTS),
            temperature=_number_field(payload, "temperature", 1.0))
        log.debug("complete: %d -> %d objects",
                  len(scene.objects), len(res.scene.objects))
        return {"scene": sc.scene_to_json(res.scene),
                "truncated": res.truncated, "seed": seed}

    @app.post("/suggest")
    def suggest(payload: dict = Body(...)):
        scene = _scene_field(payload)
        box = _box_field(payload)
        seed, rng = _seeded_rng(payload)
        out = inf.suggest(
            scene, box, params, rng,
            max_attempts=_int_field(payload, "max_attempts", 1000),
            temperature=_number_field(payload, "temperature", 1.0))
        return {"suggestion": None if out is None else sc.object_to_json(out),
                "seed": seed}

    @app.post("/place")
    def place(payload: dict = Body(...)):
        scene = _scene_field(payload)
        _field(payload, "category")
        category = _int_field(payload, "category", 0)
        seed, rng = _seeded_rng(payload)
        out = inf.place_category(
            scene, category, params, rng,
            temperature=_number_field(payload, "temperature", 1.0))
        return {"object": sc.object_to_json(out), "seed": seed}

    @app.post("/detect")
    def detect(payload: dict = Body(...)):
        scene = _scene_field(payload)
        seed, rng = _seeded_rng(payload)
        threshold = None
        if "threshold" in payload:
            threshold = _number_field(payload, "threshold", None)
        corrected, report = inf.detect_and_correct(scene, params, rng,
                                                   threshold=threshold)
        return {
            "scene": sc.scene_to_json(corrected),
            "report": {
                "scores": report.scores,
                "threshold": report.threshold,
                "flagged": report.flagged,
                "corrections": [
                    {"index": c.index,
                     "old_log_likelihood": c.old_log_likelihood,
                     "new_log_likelihood": c.new_log_likelihood}
                    for c in report.corrections],
            },
            "seed": seed,
        }

    @app.post("/likelihoods")
    def likelihoods(payload: dict = Body(...)):
        scene = _scene_field(payload)
        return {"scores": inf.object_log_likelihoods(scene, params)}

    return app
