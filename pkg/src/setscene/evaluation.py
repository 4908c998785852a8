"""Distribution-level metrics comparing two collections of scenes.

All metrics operate on category statistics only, so they need the number of
categories and nothing from the model.
"""

import numpy as np


def category_histogram(scenes, n_categories):
    """Object counts per category, summed over scenes."""
    counts = np.zeros(n_categories, dtype=np.int64)
    for scene in scenes:
        for o in scene.objects:
            if not 0 <= o.category < n_categories:
                raise ValueError(
                    f"category {o.category} outside [0, {n_categories})")
            counts[o.category] += 1
    return counts


def category_kl(generated, reference, n_categories, eps=1e-6):
    """KL(reference || generated) between category frequency histograms.

    The generated side gets add-eps smoothing so unseen categories give a
    large-but-finite penalty; reference-first direction penalizes modes the
    generator dropped.
    """
    if not generated or not reference:
        raise ValueError("category_kl needs non-empty scene lists")
    ref = category_histogram(reference, n_categories).astype(float)
    gen = category_histogram(generated, n_categories).astype(float)
    if ref.sum() == 0:
        raise ValueError("reference scenes contain no objects")
    p = ref / ref.sum()
    q = (gen + eps) / (gen.sum() + n_categories * eps)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def cooccurrence_matrix(scenes, n_categories):
    """Entry (i, j): fraction of scenes containing at least one object of
    category i and at least one of category j. Symmetric; diagonal is the
    per-scene presence frequency."""
    out = np.zeros((n_categories, n_categories))
    if not scenes:
        return out
    for scene in scenes:
        present = np.zeros(n_categories, dtype=bool)
        for o in scene.objects:
            present[o.category] = True
        out += present[:, None] & present[None, :]
    return out / len(scenes)


def cooccurrence_diff(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    return np.abs(a - b)


def mean_counts(scenes, n_categories):
    if not scenes:
        raise ValueError("mean_counts needs a non-empty scene list")
    return category_histogram(scenes, n_categories) / len(scenes)


def frequency_diff(generated, reference, n_categories):
    """Absolute difference of mean per-scene object counts, per category."""
    return np.abs(mean_counts(generated, n_categories)
                  - mean_counts(reference, n_categories))


def metric_report(generated, reference, n_categories):
    """All metrics in one JSON-ready dict."""
    co_g = cooccurrence_matrix(generated, n_categories)
    co_r = cooccurrence_matrix(reference, n_categories)
    return {
        "category_kl": category_kl(generated, reference, n_categories),
        "frequency_diff": frequency_diff(generated, reference,
                                         n_categories).tolist(),
        "cooccurrence_generated": co_g.tolist(),
        "cooccurrence_reference": co_r.tolist(),
        "cooccurrence_diff": cooccurrence_diff(co_g, co_r).tolist(),
        "n_generated": len(generated),
        "n_reference": len(reference),
    }
