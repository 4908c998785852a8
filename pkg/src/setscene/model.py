"""Network components: layout encoder, object encoder, set transformer with a
query token, and the four attribute heads.

Everything here is pure given (Parameters, inputs): parameters are treated as
immutable after creation, each forward pass builds its own graph, and no
global state is touched, so concurrent forward passes on shared parameters
are safe.
"""

import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import distributions as ds

ORDERING_MODES = ("permutation_invariant", "fixed_frequency_order",
                  "permuted_with_positions")

CHECKPOINT_MAGIC = b"ATSS"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. n_categories counts real classes; the
    category head and embedding table get one extra slot for the end symbol."""
    n_categories: int
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 8
    d_ff: int = 1024
    mixture_components: int = 10
    octaves: int = 32
    floor_resolution: int = 64
    layout_channels: tuple = (8, 16, 32, 64)
    ordering_mode: str = "permutation_invariant"

    def __post_init__(self):
        if self.n_categories < 1:
            raise ValueError("n_categories must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by "
                             f"n_heads {self.n_heads}")
        if self.mixture_components < 1 or self.octaves < 1:
            raise ValueError("mixture_components and octaves must be >= 1")
        if self.ordering_mode not in ORDERING_MODES:
            raise ValueError(f"unknown ordering_mode {self.ordering_mode!r}")
        if len(self.layout_channels) < 1:
            raise ValueError("layout_channels must not be empty")
        object.__setattr__(self, "layout_channels", tuple(self.layout_channels))

    @property
    def feature_width(self):
        # category embedding + encodings of 3 size dims, 3 location dims, 1 angle
        return self.d_model + 2 * self.octaves * 7

    @property
    def raw_per_scalar(self):
        return 3 * self.mixture_components


@dataclass
class Parameters:
    config: ModelConfig
    tensors: dict
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def trainable(self):
        return list(self.tensors.values())

    @property
    def dtype(self):
        return self.tensors["query_token"].data.dtype


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def init_parameters(config, seed=0, dtype=np.float32):
    """Seeded initialization; identical seeds give identical tensors."""
    rng = np.random.default_rng(seed)
    d = config.d_model
    t = {}

    def lin(name, fi, fo):
        t[name + "_w"] = ad.Tensor(_glorot(rng, fi, fo, (fi, fo), dtype),
                                   requires_grad=True)
        t[name + "_b"] = ad.Tensor(np.zeros(fo, dtype=dtype), requires_grad=True)

    t["category_embedding"] = ad.Tensor(
        rng.normal(0.0, 0.02, (config.n_categories + 1, d)).astype(dtype),
        requires_grad=True)
    lin("object_proj", config.feature_width, d)

    cin = 1
    for i, cout in enumerate(config.layout_channels):
        fan_in, fan_out = cin * 9, cout * 9
        t[f"layout_conv{i}_w"] = ad.Tensor(
            _glorot(rng, fan_in, fan_out, (cout, cin, 3, 3), dtype), requires_grad=True)
        t[f"layout_conv{i}_b"] = ad.Tensor(np.zeros(cout, dtype=dtype),
                                           requires_grad=True)
        cin = cout
    lin("layout_fc", config.layout_channels[-1], d)

    for i in range(config.n_layers):
        p = f"enc{i}"
        for ln in ("ln1", "ln2"):
            t[f"{p}_{ln}_g"] = ad.Tensor(np.ones(d, dtype=dtype), requires_grad=True)
            t[f"{p}_{ln}_b"] = ad.Tensor(np.zeros(d, dtype=dtype), requires_grad=True)
        for m in ("q", "k", "v", "o"):
            lin(f"{p}_attn_{m}", d, d)
        lin(f"{p}_ff1", d, config.d_ff)
        lin(f"{p}_ff2", config.d_ff, d)
    t["final_ln_g"] = ad.Tensor(np.ones(d, dtype=dtype), requires_grad=True)
    t["final_ln_b"] = ad.Tensor(np.zeros(d, dtype=dtype), requires_grad=True)

    t["query_token"] = ad.Tensor(rng.normal(0.0, 1.0, d).astype(dtype),
                                 requires_grad=True)

    k3 = config.raw_per_scalar
    lin("head_c", d, config.n_categories + 1)
    for name, fi, out in (("head_t", 2 * d, 3 * k3),
                          ("head_r", 2 * d + 6 * config.octaves, k3),
                          ("head_s", 2 * d + 8 * config.octaves, 3 * k3)):
        lin(name + "_1", fi, 128)
        lin(name + "_2", 128, 64)
        lin(name + "_3", 64, out)

    return Parameters(config, t)


# ---------------------------------------------------------------------------
# encoders


def sinusoid_features(values, octaves):
    """Numpy twin of autodiff.sinusoid_encoding for non-learnable inputs:
    (..., ) -> (..., 2*octaves), interleaved (sin 2^l pi p, cos 2^l pi p)."""
    values = np.asarray(values, dtype=float)
    freqs = (2.0 ** np.arange(octaves)) * math.pi
    angles = values[..., None] * freqs
    out = np.empty(values.shape + (2 * octaves,), dtype=values.dtype)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def object_input_features(config, categories, sizes, locations, orientations,
                          dtype=np.float64):
    """The fixed (non-learnable) part of the object encoding: sinusoid
    features of size, location, orientation, already normalized. Returns a
    plain array (..., feature_width - d_model)."""
    L = config.octaves
    two_l = 2 * L
    sizes = np.asarray(sizes, dtype=float)
    locations = np.asarray(locations, dtype=float)
    orientations = np.asarray(orientations, dtype=float)
    lead = sizes.shape[:-1]
    out = np.empty(lead + (7 * two_l,), dtype=dtype)
    out[..., 0:3 * two_l] = sinusoid_features(sizes, L).reshape(lead + (3 * two_l,))
    out[..., 3 * two_l:6 * two_l] = sinusoid_features(locations, L).reshape(
        lead + (3 * two_l,))
    out[..., 6 * two_l:] = sinusoid_features(orientations, L)
    return out


def encode_objects(params, categories, sizes, locations, orientations):
    """Per-object embeddings C_j: concat(embedding, sinusoid features) with a
    linear projection to d_model. Accepts any leading batch shape."""
    cfg = params.config
    categories = np.asarray(categories, dtype=np.int64)
    if categories.size and categories.max() >= cfg.n_categories:
        raise ValueError(f"object category {int(categories.max())} out of range "
                         f"(model has {cfg.n_categories} classes)")
    if categories.size and categories.min() < 0:
        raise ValueError("object category must be non-negative")
    lam = ad.gather_rows(params["category_embedding"], categories)
    feats = ad.constant(object_input_features(
        cfg, categories, sizes, locations, orientations, dtype=params.dtype))
    full = ad.concat([lam, feats], axis=-1)
    return ad.linear(full, params["object_proj_w"], params["object_proj_b"])


def encode_layouts(params, grids):
    """Floor features F: strided conv stack, global average pool, linear.
    grids: (B, R, R) binary masks."""
    cfg = params.config
    grids = np.asarray(grids)
    if grids.ndim == 2:
        grids = grids[None]
    if grids.shape[-1] != cfg.floor_resolution or grids.shape[-2] != cfg.floor_resolution:
        raise ValueError(f"floor mask resolution {grids.shape[-2:]} does not match "
                         f"model ({cfg.floor_resolution})")
    h = ad.constant(grids[:, None].astype(params.dtype))
    for i in range(len(cfg.layout_channels)):
        h = ad.relu(ad.conv2d(h, params[f"layout_conv{i}_w"],
                              params[f"layout_conv{i}_b"], stride=2, padding=1))
    pooled = ad.mean(h, axis=(2, 3))
    return ad.linear(pooled, params["layout_fc_w"], params["layout_fc_b"])


def encode_layout(params, mask):
    return encode_layouts(params, mask.grid)


# ---------------------------------------------------------------------------
# transformer


def _index_positions(n, d, dtype):
    """Classic sinusoidal index encoding, used only by the ordered ablations."""
    pos = np.arange(n, dtype=float)[:, None]
    i = np.arange(d // 2, dtype=float)[None, :]
    ang = pos / np.power(10000.0, 2.0 * i / d)
    pe = np.empty((n, d), dtype=dtype)
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)
    return pe


def _attention(params, prefix, h, key_bias, cfg):
    b, s, d = h.shape
    nh = cfg.n_heads
    dh = d // nh

    def heads(x):
        return ad.transpose(ad.reshape(x, (b, s, nh, dh)), (0, 2, 1, 3))

    q = heads(ad.linear(h, params[f"{prefix}_attn_q_w"], params[f"{prefix}_attn_q_b"]))
    k = heads(ad.linear(h, params[f"{prefix}_attn_k_w"], params[f"{prefix}_attn_k_b"]))
    v = heads(ad.linear(h, params[f"{prefix}_attn_v_w"], params[f"{prefix}_attn_v_b"]))
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    if key_bias is not None:
        scores = scores + key_bias
    att = ad.softmax(scores, axis=-1)
    mixed = ad.transpose(ad.matmul(att, v), (0, 2, 1, 3))
    return ad.linear(ad.reshape(mixed, (b, s, d)),
                     params[f"{prefix}_attn_o_w"], params[f"{prefix}_attn_o_b"])


def transformer_query(params, layout_feat, context, context_valid=None):
    """Run the encoder over {F} + context + {q} and return the output at the
    query-token slot, shape (B, d_model).

    context: (B, M, d) Tensor (M may be 0); context_valid: (B, M) bool array
    marking real rows, None meaning all valid. Full bidirectional attention,
    no positional signal in the default mode, so any reordering of the valid
    context rows leaves the result unchanged up to float reassociation.
    """
    cfg = params.config
    b, m, d = context.shape

    if cfg.ordering_mode != "permutation_invariant" and m > 0:
        pe = _index_positions(m, d, np.float64)[None]
        context = context + ad.constant(pe.astype(params.dtype))

    f_tok = ad.reshape(layout_feat, (b, 1, d))
    q_tok = ad.reshape(params["query_token"] + ad.constant(
        np.zeros((b, 1, d), dtype=params.dtype)), (b, 1, d))
    h = ad.concat([f_tok, context, q_tok], axis=1) if m > 0 \
        else ad.concat([f_tok, q_tok], axis=1)
    s = m + 2

    key_bias = None
    if context_valid is not None and m > 0:
        valid = np.ones((b, s), dtype=bool)
        valid[:, 1:1 + m] = np.asarray(context_valid, dtype=bool)
        if not valid.all():
            bias = np.where(valid, 0.0, -1e9).astype(params.dtype)
            key_bias = ad.constant(bias[:, None, None, :])

    for i in range(cfg.n_layers):
        p = f"enc{i}"
        normed = ad.layer_norm(h, params[f"{p}_ln1_g"], params[f"{p}_ln1_b"])
        h = h + _attention(params, p, normed, key_bias, cfg)
        normed = ad.layer_norm(h, params[f"{p}_ln2_g"], params[f"{p}_ln2_b"])
        ff = ad.linear(ad.relu(ad.linear(normed, params[f"{p}_ff1_w"],
                                         params[f"{p}_ff1_b"])),
                       params[f"{p}_ff2_w"], params[f"{p}_ff2_b"])
        h = h + ff
    h = ad.layer_norm(h, params["final_ln_g"], params["final_ln_b"])
    return ad.index(h, (slice(None), s - 1))


# ---------------------------------------------------------------------------
# attribute heads


@dataclass
class AttributeDistributionSet:
    """Distributions for the next object, populated as far as the sampled
    prefix allows: category always, location after category, orientation
    after location, size after orientation."""
    category: object = None
    location: list = None
    orientation: object = None
    size: list = None


def _mlp_head(params, name, x):
    h = ad.relu(ad.linear(x, params[f"{name}_1_w"], params[f"{name}_1_b"]))
    h = ad.relu(ad.linear(h, params[f"{name}_2_w"], params[f"{name}_2_b"]))
    return ad.linear(h, params[f"{name}_3_w"], params[f"{name}_3_b"])


def category_logits(params, q_hat):
    return ad.linear(q_hat, params["head_c_w"], params["head_c_b"])


def location_raw(params, q_hat, categories):
    """(B, 3, 3K) raw mixture parameters conditioned on the category."""
    cfg = params.config
    lam = ad.gather_rows(params["category_embedding"],
                         np.asarray(categories, dtype=np.int64))
    out = _mlp_head(params, "head_t", ad.concat([q_hat, lam], axis=-1))
    return ad.reshape(out, (out.shape[0], 3, cfg.raw_per_scalar))


def orientation_raw(params, q_hat, categories, locations_n):
    """(B, 3K) raw parameters conditioned on category and location."""
    cfg = params.config
    lam = ad.gather_rows(params["category_embedding"],
                         np.asarray(categories, dtype=np.int64))
    gt = ad.constant(sinusoid_features(locations_n, cfg.octaves).reshape(
        len(locations_n), -1).astype(params.dtype))
    return _mlp_head(params, "head_r", ad.concat([q_hat, lam, gt], axis=-1))


def size_raw(params, q_hat, categories, locations_n, orientations_n):
    """(B, 3, 3K) raw parameters conditioned on category, location, angle."""
    cfg = params.config
    lam = ad.gather_rows(params["category_embedding"],
                         np.asarray(categories, dtype=np.int64))
    gt = ad.constant(sinusoid_features(locations_n, cfg.octaves).reshape(
        len(locations_n), -1).astype(params.dtype))
    gr = ad.constant(sinusoid_features(orientations_n, cfg.octaves).astype(params.dtype))
    out = _mlp_head(params, "head_s", ad.concat([q_hat, lam, gt, gr], axis=-1))
    return ad.reshape(out, (out.shape[0], 3, cfg.raw_per_scalar))


def extract_attributes(params, q_hat, category=None, location=None, orientation=None):
    """Evaluate attribute heads for one query output, as far as the provided
    prefix allows. q_hat: (d_model,) array or Tensor. The prefix must grow in
    chain order; location without category (or orientation without location)
    is rejected."""
    if location is not None and category is None:
        raise ValueError("location head needs a sampled category first")
    if orientation is not None and location is None:
        raise ValueError("orientation head needs a sampled location first")

    q = ad.as_tensor(q_hat)
    q2 = ad.reshape(q, (1, q.shape[-1]))
    out = AttributeDistributionSet()
    out.category = ds.CategoricalDist(category_logits(params, q2).data[0])
    if category is None:
        return out
    cfg = params.config
    if not (0 <= int(category) <= cfg.n_categories):
        raise ValueError(f"category {category} out of range")
    cats = np.asarray([int(category)])
    t_raw = location_raw(params, q2, cats).data[0]
    out.location = [ds.mixture_from_raw(t_raw[i]) for i in range(3)]
    if location is None:
        return out
    loc = np.asarray(location, dtype=float).reshape(1, 3)
    r_raw = orientation_raw(params, q2, cats, loc).data[0]
    out.orientation = ds.mixture_from_raw(r_raw)
    if orientation is None:
        return out
    ori = np.asarray([float(orientation)])
    s_raw = size_raw(params, q2, cats, loc, ori).data[0]
    out.size = [ds.mixture_from_raw(s_raw[i]) for i in range(3)]
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params, path):
    """Little-endian binary: magic, version, length-prefixed JSON header
    (config + metadata), then per-tensor records sorted by name. Payloads are
    float32, so save -> load -> save is byte-identical."""
    header = json.dumps({"config": asdict(params.config),
                         "metadata": params.metadata},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(params.tensors)))
        for name in sorted(params.tensors):
            data = params.tensors[name].data
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint: bad magic {blob[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    header = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen
    cfg_doc = dict(header["config"])
    cfg_doc["layout_channels"] = tuple(cfg_doc["layout_channels"])
    config = ModelConfig(**cfg_doc)
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        tensors[name] = ad.Tensor(data.copy(), requires_grad=True)
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    return Parameters(config, tensors, header.get("metadata", {}))


def parameter_count(params):
    return int(sum(t.data.size for t in params.tensors.values()))
