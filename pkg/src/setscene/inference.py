"""Generation-time behaviors over a trained set model.

Every operation treats the scene's stored object order as irrelevant: the
context enters the model as a set (or, for frequency-ordered models, in the
canonical order recovered from checkpoint metadata), so outputs depend only
on which objects are present. Scenes passed in are never mutated; completion
and correction work on copies.

All sampling happens in the model's normalized coordinates and is mapped
back through the scene bounds, so returned objects are in world units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import distributions as ds
from . import model as md
from . import scenes as sc
from . import training as tr


class EndSymbol:
    """Marker returned when the model decides the scene is complete."""

    __slots__ = ()

    def __repr__(self):
        return "EndSymbol()"


END = EndSymbol()

# rejection sampling gives up early once the model has voted to stop this
# many times without any candidate landing in the constraint box
END_VOTE_LIMIT = 25


@dataclass
class SynthesisResult:
    scene: sc.Scene
    truncated: bool  # hit the object cap before the end symbol


@dataclass
class CorrectionRecord:
    index: int
    old_log_likelihood: float
    new_log_likelihood: float


@dataclass
class AnomalyReport:
    scores: list  # per-object conditional log-likelihoods, scene order
    threshold: float
    flagged: list = field(default_factory=list)
    corrections: list = field(default_factory=list)


def _ordered_context(objects, params):
    if params.config.ordering_mode == "fixed_frequency_order":
        stats = params.metadata.get("category_frequencies")
        if stats is None:
            raise ValueError(
                "fixed_frequency_order model has no category_frequencies "
                "metadata; retrain or supply a calibrated checkpoint")
        return tr.frequency_order(objects, stats)
    return list(objects)


def _query_for(scene, objects, params):
    """q-hat for the given conditioning set of objects within `scene`."""
    cfg = params.config
    grid = scene.rasterized_floor(cfg.floor_resolution).grid
    feat = md.encode_layouts(params, grid[None])
    objects = _ordered_context(objects, params)
    m = len(objects)
    if m:
        cats = np.array([[o.category for o in objects]], dtype=np.int64)
        sizes = np.empty((1, m, 3))
        locs = np.empty((1, m, 3))
        oris = np.empty((1, m))
        for i, o in enumerate(objects):
            sizes[0, i], locs[0, i], oris[0, i] = sc.normalize_object(o, scene.bounds)
        ctx = md.encode_objects(params, cats, sizes, locs, oris)
    else:
        ctx = ad.constant(np.zeros((1, 0, cfg.d_model), dtype=params.dtype))
    return md.transformer_query(params, feat, ctx)


def _attribute_log_prob(params, q, category, size_n, loc_n, orient_n):
    """Joint log-prob of one object's attributes under the chained heads."""
    logits = md.category_logits(params, q).data[0]
    lp = ds.categorical_log_prob(ds.CategoricalDist(logits), category)
    t_raw = md.location_raw(params, q, [category]).data[0]
    for i in range(3):
        lp += ds.logistic_mixture_log_prob(loc_n[i], ds.mixture_from_raw(t_raw[i]))
    r_raw = md.orientation_raw(params, q, [category], loc_n[None]).data[0]
    lp += ds.logistic_mixture_log_prob(orient_n, ds.mixture_from_raw(r_raw))
    s_raw = md.size_raw(params, q, [category], loc_n[None],
                        np.asarray([orient_n])).data[0]
    for i in range(3):
        lp += ds.logistic_mixture_log_prob(size_n[i], ds.mixture_from_raw(s_raw[i]))
    return float(lp)


def generate_next(scene, params, rng, forced_category=None, temperature=1.0):
    """Sample the next object given the scene's objects and floor.

    Returns a SceneObject, or END when the stop class is drawn. With
    forced_category the category head is bypassed (the stop class cannot
    be forced) and only the continuous attributes are sampled.
    """
    cfg = params.config
    if forced_category is not None:
        forced_category = int(forced_category)
        if not 0 <= forced_category < cfg.n_categories:
            raise ValueError(
                f"forced_category must be in [0, {cfg.n_categories}), "
                f"got {forced_category}")
    q = _query_for(scene, scene.objects, params)
    if forced_category is not None:
        c = forced_category
    else:
        logits = md.category_logits(params, q).data[0]
        c = ds.categorical_sample(ds.CategoricalDist(logits), rng, temperature)
        if c == cfg.n_categories:
            return END
    t_raw = md.location_raw(params, q, [c]).data[0]
    loc_n = np.array([ds.logistic_mixture_sample(ds.mixture_from_raw(t_raw[i]),
                                                 rng, temperature)
                      for i in range(3)])
    r_raw = md.orientation_raw(params, q, [c], loc_n[None]).data[0]
    orient_n = ds.logistic_mixture_sample(ds.mixture_from_raw(r_raw), rng,
                                          temperature)
    s_raw = md.size_raw(params, q, [c], loc_n[None],
                        np.asarray([orient_n])).data[0]
    size_n = np.array([ds.logistic_mixture_sample(ds.mixture_from_raw(s_raw[i]),
                                                  rng, temperature)
                       for i in range(3)])
    labels = params.metadata.get("category_labels")
    name = labels[c] if labels and c < len(labels) else None
    return sc.denormalize_object(c, size_n, loc_n, orient_n, scene.bounds,
                                 category_name=name)


def _extend(scene, params, rng, max_objects, temperature):
    truncated = False
    while True:
        if len(scene.objects) >= max_objects:
            truncated = True
            break
        out = generate_next(scene, params, rng, temperature=temperature)
        if out is END:
            break
        scene.objects.append(out)
    return SynthesisResult(scene, truncated)


def synthesize(floor_polygon, params, rng, max_objects=30, temperature=1.0,
               room_type=None):
    """Generate a full scene on an empty floor, stopping at the end symbol
    or at max_objects (then the result is marked truncated)."""
    polygon = np.array(floor_polygon, dtype=float)
    bounds = sc.square_bounds_for_polygon(polygon)
    if room_type is None:
        room_type = params.metadata.get("room_type", "scene")
    scene = sc.Scene(room_type, bounds, polygon, [])
    return _extend(scene, params, rng, max_objects, temperature)


def complete(partial, params, rng, max_objects=30, temperature=1.0):
    """Continue generation from an existing partial scene. The input scene
    is left untouched; its objects appear verbatim in the result."""
    if len(partial.objects) > max_objects:
        raise ValueError(
            f"partial scene has {len(partial.objects)} objects, "
            f"over the cap of {max_objects}")
    return _extend(partial.copy(), params, rng, max_objects, temperature)


def object_log_likelihood(scene, index, params):
    """Log-prob of object `index` conditioned on every other object and the
    floor. Well-defined without an order because the context is a set."""
    n = len(scene.objects)
    if not 0 <= index < n:
        raise IndexError(f"object index {index} out of range for {n} objects")
    others = [o for i, o in enumerate(scene.objects) if i != index]
    q = _query_for(scene, others, params)
    obj = scene.objects[index]
    size_n, loc_n, orient_n = sc.normalize_object(obj, scene.bounds)
    return _attribute_log_prob(params, q, obj.category, size_n, loc_n, orient_n)


def object_log_likelihoods(scene, params):
    return [object_log_likelihood(scene, i, params)
            for i in range(len(scene.objects))]


def calibrate_anomaly_threshold(params, scenes, percentile=5.0):
    """Store the given percentile of per-object log-likelihoods over held-out
    scenes in the checkpoint metadata; detect_and_correct uses it by default."""
    scores = []
    for scene in scenes:
        scores.extend(object_log_likelihoods(scene, params))
    if not scores:
        raise ValueError("calibration scenes contain no objects")
    value = float(np.percentile(scores, percentile))
    params.metadata["likelihood_p5"] = value
    return value


def detect_and_correct(scene, params, rng, threshold=None, max_resamples=10):
    """Flag the lowest-likelihood object if it scores under the threshold and
    reposition it, keeping category, size and orientation.

    The replacement location is the best of up to max_resamples draws from
    the location head conditioned on the other objects. Returns the corrected
    scene copy and a report with all per-object scores.
    """
    if not scene.objects:
        raise ValueError("anomaly detection needs a non-empty scene")
    if threshold is None:
        threshold = params.metadata.get("likelihood_p5")
        if threshold is None:
            raise ValueError(
                "checkpoint has no calibrated likelihood threshold; run "
                "calibrate_anomaly_threshold or pass threshold explicitly")
    scores = object_log_likelihoods(scene, params)
    corrected = scene.copy()
    report = AnomalyReport([float(s) for s in scores], float(threshold))
    worst = int(np.argmin(scores))
    if scores[worst] >= threshold:
        return corrected, report
    report.flagged.append(worst)
    obj = scene.objects[worst]
    others = [o for i, o in enumerate(scene.objects) if i != worst]
    q = _query_for(scene, others, params)
    size_n, _, orient_n = sc.normalize_object(obj, scene.bounds)
    t_raw = md.location_raw(params, q, [obj.category]).data[0]
    best_lp, best_loc = -math.inf, None
    for _ in range(max_resamples):
        loc_n = np.array([ds.logistic_mixture_sample(ds.mixture_from_raw(t_raw[i]), rng)
                          for i in range(3)])
        lp = _attribute_log_prob(params, q, obj.category, size_n, loc_n, orient_n)
        if lp > best_lp:
            best_lp, best_loc = lp, loc_n
    center, half = sc.bounds_center_half(scene.bounds)
    location = center + np.clip(best_loc, -1.0, 1.0) * half
    corrected.objects[worst] = sc.SceneObject(
        obj.category, obj.size.copy(), location, obj.orientation,
        obj.category_name)
    report.corrections.append(
        CorrectionRecord(worst, float(scores[worst]), best_lp))
    return corrected, report


def suggest(scene, constraint_box, params, rng, max_attempts=1000,
            temperature=1.0):
    """Rejection-sample a next object whose centroid falls in the box.

    constraint_box is (3, 2) per-axis [min, max] in world coordinates and
    must have positive extent on every axis. Acceptance is exactly the
    centroid-in-box test. Returns None ("nothing to add") once the end
    symbol has been drawn END_VOTE_LIMIT times, or after max_attempts.
    """
    box = np.asarray(constraint_box, dtype=float)
    if box.shape != (3, 2):
        raise ValueError(f"constraint_box must have shape (3, 2), got {box.shape}")
    if not np.all(box[:, 1] > box[:, 0]):
        raise ValueError("constraint_box is degenerate: each axis needs max > min")
    end_votes = 0
    for _ in range(max_attempts):
        out = generate_next(scene, params, rng, temperature=temperature)
        if out is END:
            end_votes += 1
            if end_votes >= END_VOTE_LIMIT:
                return None
            continue
        if np.all((box[:, 0] <= out.location) & (out.location <= box[:, 1])):
            return out
    return None


def place_category(scene, category, params, rng, temperature=1.0):
    """Sample location, orientation and size for a user-chosen category."""
    return generate_next(scene, params, rng, forced_category=category,
                         temperature=temperature)
