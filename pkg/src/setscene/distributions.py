"""Mixture-of-logistics and categorical distributions.

Two layers: plain-numpy value types used at sampling/scoring time, and
tensor-space log-likelihoods over raw network outputs used by training.
Raw parameter layout per scalar dimension is [means | raw scales | raw
weight logits], each of length K; the constrained transform is
weights = softmax(logits), scale = softplus(raw) + SCALE_FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

SCALE_FLOOR = 1e-3


class InvalidDistribution(ValueError):
    pass


@dataclass
class LogisticMixture1D:
    weights: np.ndarray  # (K,) on the simplex
    means: np.ndarray    # (K,) in attribute units
    scales: np.ndarray   # (K,) > 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.scales = np.asarray(self.scales, dtype=np.float64)

    def validate(self):
        k = self.weights.shape[0]
        if self.means.shape != (k,) or self.scales.shape != (k,):
            raise InvalidDistribution(
                f"component count mismatch: {self.weights.shape} vs "
                f"{self.means.shape} vs {self.scales.shape}")
        if not np.all(np.isfinite(self.weights)) or not np.all(np.isfinite(self.means)) \
                or not np.all(np.isfinite(self.scales)):
            raise InvalidDistribution("non-finite mixture parameters")
        if abs(self.weights.sum() - 1.0) > 1e-6 or np.any(self.weights < 0):
            raise InvalidDistribution(f"weights not a simplex: sum={self.weights.sum()}")
        if np.any(self.scales < SCALE_FLOOR):
            raise InvalidDistribution(f"scale below floor {SCALE_FLOOR}")
        return self


@dataclass
class CategoricalDist:
    logits: np.ndarray  # (C+1,): C real categories plus the stop class

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)

    def validate(self):
        if not np.all(np.isfinite(self.logits)):
            raise InvalidDistribution("non-finite logits")
        return self

    @property
    def n_classes(self):
        return self.logits.shape[0]


def _np_logsumexp(a, axis=-1):
    m = a.max(axis=axis, keepdims=True)
    return (np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


def _np_softplus(x):
    return np.logaddexp(0.0, x)


def logistic_log_density(x, mean, scale):
    """log of e^{-z} / (scale * (1+e^{-z})^2) with z=(x-mean)/scale."""
    z = (x - mean) / scale
    return -z - np.log(scale) - 2.0 * _np_softplus(-z)


def logistic_mixture_log_prob(x, d: LogisticMixture1D):
    d.validate()
    comps = np.log(np.maximum(d.weights, 1e-300)) + logistic_log_density(x, d.means, d.scales)
    return float(_np_logsumexp(comps))


def logistic_mixture_cdf(x, d: LogisticMixture1D):
    """Analytic CDF: sum_k w_k * sigmoid((x - mu_k)/s_k). Used as sampling oracle."""
    z = (np.asarray(x)[..., None] - d.means) / d.scales
    return (d.weights / (1.0 + np.exp(-z))).sum(axis=-1)


def logistic_mixture_sample(d: LogisticMixture1D, rng, temperature=1.0):
    """Pick a component, then inverse-CDF a logistic scaled by temperature."""
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    d.validate()
    k = _pick(d.weights, rng)
    u = min(max(rng.random(), 1e-12), 1.0 - 1e-12)
    return float(d.means[k] + d.scales[k] * temperature * np.log(u / (1.0 - u)))


def _pick(probs, rng):
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right").clip(0, len(probs) - 1))


def categorical_log_prob(d: CategoricalDist, idx):
    d.validate()
    if not 0 <= idx < d.n_classes:
        raise IndexError(f"class index {idx} out of range [0, {d.n_classes})")
    return float((d.logits - _np_logsumexp(d.logits))[idx])


def categorical_sample(d: CategoricalDist, rng, temperature=1.0):
    d.validate()
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    logits = d.logits / temperature
    probs = np.exp(logits - _np_logsumexp(logits))
    return _pick(probs, rng)


# ---------------------------------------------------------------------------
# raw-parameter plumbing

def raw_param_count(k):
    return 3 * k


def mixture_from_raw(raw):
    """Constrain one dimension's raw head output (3K,) to a valid mixture."""
    raw = np.asarray(raw, dtype=np.float64)
    k = raw.shape[-1] // 3
    means = raw[..., :k]
    scales = _np_softplus(raw[..., k:2 * k]) + SCALE_FLOOR
    logits = raw[..., 2 * k:]
    weights = np.exp(logits - _np_logsumexp(logits))
    return LogisticMixture1D(weights, means, scales)


def mixture_log_prob_tensor(raw, x):
    """Differentiable mixture log-density.

    raw: Tensor (..., 3K) of unconstrained parameters; x: array (...,) of
    targets. Returns Tensor (...,) of log-densities.
    """
    k = raw.shape[-1] // 3
    means, raw_scales, raw_logits = ad.split(raw, [k, k, k], axis=-1)
    log_w = ad.log_softmax(raw_logits, axis=-1)
    scales = ad.softplus(raw_scales) + SCALE_FLOOR
    xt = x if isinstance(x, ad.Tensor) else ad.as_tensor(np.asarray(x, dtype=float))
    xt = ad.reshape(xt, xt.data.shape + (1,))
    z = (xt - means) / scales
    log_f = -z - ad.log(scales) - 2.0 * ad.softplus(-z)
    return ad.logsumexp(log_w + log_f, axis=-1)


def categorical_log_prob_tensor(logits, idx):
    """Differentiable class log-probability; logits (B, C), idx (B,) ints."""
    lsm = ad.log_softmax(logits, axis=-1)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(idx.shape[0])
    return lsm[rows, idx]
