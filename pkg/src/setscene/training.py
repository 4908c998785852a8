"""Autoregressive set NLL training with permutation augmentation.

Each draw turns a scene into one prediction problem: permute the objects,
keep a uniformly chosen prefix as context, and score the next element (or
the end symbol once the prefix is the whole scene). Attribute terms are
masked out when the target is the end symbol, which has no box.
"""

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import distributions as ds
from . import model as md
from . import scenes as sc

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults; reference-scale runs use batch_size 128 and
    100_000 iterations."""
    lr: float = 1e-4
    batch_size: int = 32
    max_iterations: int = 5000
    validation_interval: int = 1000
    seed: int = 0
    rotation_augmentation: bool = True
    ordering_mode: str = "permutation_invariant"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_iterations < 1 \
                or self.validation_interval < 1:
            raise ValueError("training config values must be positive")
        if self.ordering_mode not in md.ORDERING_MODES:
            raise ValueError(f"unknown ordering_mode {self.ordering_mode!r}")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PreparedScene:
    """Normalized per-object arrays plus the rasterized floor grid."""
    categories: np.ndarray
    sizes: np.ndarray
    locations: np.ndarray
    orientations: np.ndarray
    grid: np.ndarray


def dataset_category_frequencies(scenes, n_categories):
    counts = np.zeros(n_categories, dtype=np.int64)
    for scene in scenes:
        for o in scene.objects:
            counts[o.category] += 1
    return counts


def frequency_order(scene, stats):
    """Objects sorted by descending category frequency; ties broken by
    category id, then centroid lexicographically. Input order irrelevant.
    Accepts a Scene or a plain list of objects."""
    objects = scene.objects if hasattr(scene, "objects") else scene
    stats = np.asarray(stats)

    def key(o):
        return (-int(stats[o.category]), o.category,
                o.location[0], o.location[1], o.location[2])

    return sorted(objects, key=key)


def prepare_scene(scene, model_config, stats=None):
    objs = scene.objects
    if model_config.ordering_mode == "fixed_frequency_order":
        if stats is None:
            raise ValueError("fixed_frequency_order needs dataset category stats")
        objs = frequency_order(scene, stats)
    m = len(objs)
    cats = np.empty(m, dtype=np.int64)
    sizes = np.empty((m, 3))
    locs = np.empty((m, 3))
    oris = np.empty(m)
    for i, o in enumerate(objs):
        cats[i] = o.category
        sizes[i], locs[i], oris[i] = sc.normalize_object(o, scene.bounds)
    grid = scene.rasterized_floor(model_config.floor_resolution).grid
    return PreparedScene(cats, sizes, locs, oris, grid)


def draw_example(rng, n_objects, ordering_mode):
    """One (permutation, prefix length) draw. The fixed-order mode keeps the
    canonical order and only draws the prefix length."""
    if ordering_mode == "fixed_frequency_order":
        perm = np.arange(n_objects)
    else:
        perm = rng.permutation(n_objects)
    t = int(rng.integers(0, n_objects + 1))
    return perm, t


def batch_nll(params, examples):
    """Losses for a batch of (PreparedScene, permutation, prefix_len) rows.

    Returns (per_example Tensor (B,), mean Tensor scalar). Contexts are
    padded to the longest prefix and masked in attention, so each row's loss
    equals the one it would get alone (up to float reassociation).
    """
    cfg = params.config
    b = len(examples)
    end_class = cfg.n_categories
    mmax = max(t for _, _, t in examples)
    r = cfg.floor_resolution

    cats = np.zeros((b, mmax), dtype=np.int64)
    sizes = np.zeros((b, mmax, 3))
    locs = np.zeros((b, mmax, 3))
    oris = np.zeros((b, mmax))
    valid = np.zeros((b, mmax), dtype=bool)
    grids = np.empty((b, r, r), dtype=np.uint8)
    tcat = np.empty(b, dtype=np.int64)
    tsize = np.zeros((b, 3))
    tloc = np.zeros((b, 3))
    tori = np.zeros(b)
    real = np.zeros(b)

    for i, (prep, perm, t) in enumerate(examples):
        idx = np.asarray(perm[:t], dtype=np.int64)
        cats[i, :t] = prep.categories[idx]
        sizes[i, :t] = prep.sizes[idx]
        locs[i, :t] = prep.locations[idx]
        oris[i, :t] = prep.orientations[idx]
        valid[i, :t] = True
        grids[i] = prep.grid
        if t < len(prep.categories):
            j = int(perm[t])
            tcat[i] = prep.categories[j]
            tsize[i] = prep.sizes[j]
            tloc[i] = prep.locations[j]
            tori[i] = prep.orientations[j]
            real[i] = 1.0
        else:
            tcat[i] = end_class

    feat = md.encode_layouts(params, grids)
    if mmax > 0:
        ctx = md.encode_objects(params, cats, sizes, locs, oris)
        q_hat = md.transformer_query(params, feat, ctx, valid)
    else:
        ctx = ad.constant(np.zeros((b, 0, cfg.d_model), dtype=params.dtype))
        q_hat = md.transformer_query(params, feat, ctx)

    cat_nll = -ds.categorical_log_prob_tensor(md.category_logits(params, q_hat), tcat)
    t_lp = ds.mixture_log_prob_tensor(md.location_raw(params, q_hat, tcat), tloc)
    r_lp = ds.mixture_log_prob_tensor(md.orientation_raw(params, q_hat, tcat, tloc), tori)
    s_lp = ds.mixture_log_prob_tensor(
        md.size_raw(params, q_hat, tcat, tloc, tori), tsize)
    attr_nll = -(ad.sum_(t_lp, axis=-1) + r_lp + ad.sum_(s_lp, axis=-1))
    per_example = cat_nll + ad.constant(real.astype(params.dtype)) * attr_nll
    return per_example, ad.mean(per_example)


def nll_example(scene, params, rng, stats=None):
    """Single Monte-Carlo loss draw for one scene (differentiable scalar)."""
    prepared = prepare_scene(scene, params.config, stats)
    perm, t = draw_example(rng, len(scene.objects), params.config.ordering_mode)
    _, loss = batch_nll(params, [(prepared, perm, t)])
    return loss


def exhaustive_scene_nll(params, scene, stats=None, max_objects=6):
    """Exact objective for one scene: average loss over every permutation and
    every prefix length. Factorial blow-up, so only for small scenes."""
    m = len(scene.objects)
    if m > max_objects:
        raise ValueError(f"exhaustive enumeration capped at {max_objects} objects")
    prepared = prepare_scene(scene, params.config, stats)
    perms = [np.asarray(p, dtype=np.int64)
             for p in itertools.permutations(range(m))] or [np.zeros(0, np.int64)]
    rows = [(prepared, perm, t) for perm in perms for t in range(m + 1)]
    vec, _ = batch_nll(params, rows)
    return float(vec.data.mean())


def augment_rotation(scene, angle):
    """Rotate the whole scene rigidly about the room center."""
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    return sc.rotate_scene(scene, angle)


# ---------------------------------------------------------------------------
# training loop


def _validation_rows(val_scenes, model_config, stats, rng, n_permutations=4):
    """Fixed evaluation rows: a few sampled permutations per scene, every
    prefix length for each. Grouped per scene for per-scene averaging."""
    groups = []
    for scene in val_scenes:
        prepared = prepare_scene(scene, model_config, stats)
        m = len(scene.objects)
        rows = []
        for _ in range(n_permutations):
            perm, _ = draw_example(rng, m, model_config.ordering_mode)
            rows.extend((prepared, perm, t) for t in range(m + 1))
        groups.append(rows)
    return groups


def _validation_nll(params, groups, chunk=256):
    means = []
    for rows in groups:
        vals = []
        for k in range(0, len(rows), chunk):
            vec, _ = batch_nll(params, rows[k:k + chunk])
            vals.append(vec.data)
        means.append(float(np.concatenate(vals).mean()))
    return float(np.mean(means))


def train(scenes, params, config, val_scenes=None, checkpoint_path=None,
          metrics_path=None):
    """Minibatch Adam on the Monte-Carlo set NLL.

    Keeps the parameters with the best validation NLL (evaluated every
    validation_interval iterations on fixed rows) and restores them at the
    end. Returns (params, metrics_rows); metrics rows are dicts matching the
    CSV columns iteration,train_nll,val_nll,wall_ms. Fully deterministic for
    a given config seed, apart from the wall_ms timing column.
    """
    if not scenes:
        raise ValueError("training needs a non-empty dataset")
    if config.ordering_mode != params.config.ordering_mode:
        raise ValueError(
            f"training ordering_mode {config.ordering_mode!r} does not match "
            f"model {params.config.ordering_mode!r}")
    if val_scenes is None:
        n_val = max(1, len(scenes) // 10)
        if len(scenes) <= n_val:
            raise ValueError("dataset too small to hold out a validation split")
        val_scenes, scenes = scenes[-n_val:], scenes[:-n_val]

    mcfg = params.config
    stats = None
    if config.ordering_mode == "fixed_frequency_order":
        stats = dataset_category_frequencies(scenes, mcfg.n_categories)

    rng = np.random.default_rng(config.seed)
    val_rng = np.random.default_rng(config.seed + 77003)
    val_groups = _validation_rows(val_scenes, mcfg, stats, val_rng)
    cached = None
    if not config.rotation_augmentation:
        cached = [prepare_scene(s, mcfg, stats) for s in scenes]

    optimizer = ad.Adam(params.trainable(), lr=config.lr)
    best_val = math.inf
    best_state = {k: t.data.copy() for k, t in params.tensors.items()}
    metrics = []
    window = []
    started = time.perf_counter()

    csv_file = open(metrics_path, "w") if metrics_path else None
    if csv_file:
        csv_file.write("iteration,train_nll,val_nll,wall_ms\n")

    try:
        for it in range(1, config.max_iterations + 1):
            picks = rng.integers(0, len(scenes), config.batch_size)
            examples = []
            for i in picks:
                if config.rotation_augmentation:
                    theta = rng.uniform(0.0, TWO_PI)
                    prep = prepare_scene(sc.rotate_scene(scenes[i], theta),
                                         mcfg, stats)
                else:
                    prep = cached[i]
                perm, t = draw_example(rng, len(scenes[i].objects),
                                       config.ordering_mode)
                examples.append((prep, perm, t))

            _, loss = batch_nll(params, examples)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at iteration {it} "
                    f"(scene ids {sorted(set(int(p) for p in picks))})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            window.append(loss_val)

            if it % config.validation_interval == 0 or it == config.max_iterations:
                val_nll = _validation_nll(params, val_groups)
                row = {
                    "iteration": it,
                    "train_nll": float(np.mean(window)),
                    "val_nll": val_nll,
                    "wall_ms": (time.perf_counter() - started) * 1000.0,
                }
                metrics.append(row)
                window = []
                if csv_file:
                    csv_file.write(f"{row['iteration']},{row['train_nll']!r},"
                                   f"{row['val_nll']!r},{row['wall_ms']!r}\n")
                    csv_file.flush()
                if val_nll < best_val:
                    best_val = val_nll
                    best_state = {k: t.data.copy()
                                  for k, t in params.tensors.items()}
    finally:
        if csv_file:
            csv_file.close()

    for name, data in best_state.items():
        params.tensors[name].data = data
    params.metadata.update({
        "best_val_nll": best_val,
        "train_iterations": config.max_iterations,
        "room_type": scenes[0].room_type,
    })
    if stats is not None:
        params.metadata["category_frequencies"] = [int(c) for c in stats]
    labels = {}
    for s in scenes:
        for o in s.objects:
            if o.category_name is not None:
                labels.setdefault(o.category, o.category_name)
    if len(labels) == mcfg.n_categories:
        params.metadata["category_labels"] = [labels[i] for i in range(mcfg.n_categories)]
    if checkpoint_path:
        md.save_checkpoint(params, checkpoint_path)
    return params, metrics

