"""Trainable causal autoregressive density model.

A one-hidden-layer tanh network maps the causal context features of each
subpixel to the parameters of a K-component discretized mixture of logistics.
The hidden layer is block-structured: context units read the tap-contrast
features, positional units read the normalized row/column features, and the
location/scale heads are wired to context units only (positional information
reaches the mixture weights). Learned gates couple raw context back in, and
the network's own contribution to locations and scales is damped by the
local-contrast gate g = 1 - exp(-dispersion / 0.16):

  mixture logits:  w_k = g * head_k + logit_bias_k
  locations:       mu_k = 127.5 * (g * head_k + 1) + anchor_gate_k * (anchor - 127.5)
  log scales:      ls_k = g * head_k + scale_bias_k + dispersion_gate_k * dispersion

so on a perfectly flat causal neighbourhood the mixture is fully pinned by
the biases: every component sits exactly at the anchor with the
bias-determined base scale and weights. That pins the (otherwise
unvisited) flat-context conditional instead of leaving it to extrapolation,
which is what makes smooth out-of-distribution inputs inherit confident,
high likelihoods the way heavily local models do. The anchor gates start at
1 and the dispersion gates at 4; training refines both. With every weight
and gate at zero the mixture is the same at every subpixel, which keeps the
untrained model analytically checkable.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, ShapeError, TrainingDivergenceError, ValidationError
from ..imaging import Dataset, ImageTensor
from ..rng import make_rng
from . import features as F
from . import mixture as mx

MID = 127.5
CHECKPOINT_FORMAT = "oodkit-model/1"

INIT_WEIGHT_STD = 0.05
INIT_LOC_SPREAD = 0.05
INIT_SCALE = 5.0
ANCHOR_GATE_INIT = 1.0
DISPERSION_GATE_INIT = 4.0
TYPICAL_DISPERSION = 0.16  # scale-bias offset so the initial typical scale is INIT_SCALE

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    context_radius: int = 4
    long_range_taps: tuple[tuple[int, int], ...] | None = None  # None = per-shape defaults
    positional_features: bool = True
    hidden_width: int = 32
    num_mix: int = 5
    channels_conditioning: bool = True
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    long_range_unit_fraction: float = 0.0  # context units dedicated to long-range taps

    def __post_init__(self):
        if self.context_radius < 1:
            raise ValidationError("context_radius must be >= 1")
        if self.num_mix < 1:
            raise ValidationError("num_mix must be >= 1")
        if self.hidden_width < 4:
            raise ValidationError("hidden_width must be >= 4")
        if not 0.0 <= self.long_range_unit_fraction <= 1.0:
            raise ValidationError("long_range_unit_fraction must lie in [0, 1]")
        if self.long_range_taps is not None:
            object.__setattr__(self, "long_range_taps",
                               tuple(F.validate_taps(self.long_range_taps)))

    @property
    def n_positional_units(self) -> int:
        return self.hidden_width // 4 if self.positional_features else 0

    @property
    def n_context_units(self) -> int:
        return self.hidden_width - self.n_positional_units


@dataclass
class ModelState:
    config: ModelConfig
    layout: F.FeatureLayout
    w1: np.ndarray          # (hidden, features)
    b1: np.ndarray          # (hidden,)
    w2: np.ndarray          # (3K, hidden)
    b2: np.ndarray          # (3K,)
    anchor_gates: np.ndarray      # (K,)
    dispersion_gates: np.ndarray  # (K,)
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "anchor_gates", "dispersion_gates"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.layout.height, self.layout.width, self.layout.channels)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.anchor_gates, self.dispersion_gates]

    def copy(self) -> "ModelState":
        return ModelState(self.config, self.layout,
                          *(p.copy() for p in self.params),
                          history=[dict(h) for h in self.history])


def _masks(config: ModelConfig, layout: F.FeatureLayout):
    """Structural sparsity of the two layers (applied in the forward pass)."""
    hid, nf, k = config.hidden_width, layout.n_features, config.num_mix
    n_pos = config.n_positional_units
    n_ctx = hid - n_pos
    m1 = np.zeros((hid, nf))
    ctx_cols = np.arange(layout.n_context)
    n_lr_units = int(round(n_ctx * config.long_range_unit_fraction))
    n_local_units = n_ctx - n_lr_units
    local_cols = np.concatenate([layout.local_columns, layout.prev_channel_columns,
                                 [layout.dispersion_column]]).astype(int)
    if n_lr_units == 0:
        m1[np.ix_(np.arange(n_ctx), ctx_cols)] = 1.0
    else:
        m1[np.ix_(np.arange(n_local_units), local_cols)] = 1.0
        m1[np.ix_(np.arange(n_local_units, n_ctx), layout.long_range_columns.astype(int))] = 1.0
    if n_pos:
        m1[np.ix_(np.arange(n_ctx, hid), layout.positional_columns.astype(int))] = 1.0
    m2 = np.ones((3 * k, hid))
    if n_pos:
        m2[k:, n_ctx:] = 0.0  # location and scale heads are position-blind
    return m1, m2


def init_state(config: ModelConfig, shape: tuple[int, int, int],
               zero_weights: bool = False) -> ModelState:
    layout = F.build_layout(config, shape)
    k = config.num_mix
    rng = make_rng(config.seed)
    m1, m2 = _masks(config, layout)
    if zero_weights:
        w1 = np.zeros_like(m1)
        w2 = np.zeros_like(m2)
        anchor_gates = np.zeros(k)
        dispersion_gates = np.zeros(k)
    else:
        w1 = rng.normal(0.0, INIT_WEIGHT_STD, size=m1.shape) * m1
        w2 = rng.normal(0.0, INIT_WEIGHT_STD, size=m2.shape) * m2
        anchor_gates = np.full(k, ANCHOR_GATE_INIT)
        dispersion_gates = np.full(k, DISPERSION_GATE_INIT)
    b1 = np.zeros(config.hidden_width)
    b2 = np.zeros(3 * k)
    if not zero_weights:
        b2[k:2 * k] = np.linspace(-INIT_LOC_SPREAD, INIT_LOC_SPREAD, k)
    b2[2 * k:] = np.log(INIT_SCALE) - (0.0 if zero_weights else
                                       DISPERSION_GATE_INIT * TYPICAL_DISPERSION)
    return ModelState(config, layout, w1, b1, w2, b2, anchor_gates, dispersion_gates)


def location_gate(dispersion):
    """Damping of the network's location/scale corrections: 0 on a flat
    causal neighbourhood, ~1 at and beyond typical training contrast."""
    return -np.expm1(-np.asarray(dispersion, dtype=np.float64) / TYPICAL_DISPERSION)


def _forward(state: ModelState, feats, targets, anchors, dispersion):
    k = state.config.num_mix
    m1, m2 = _masks(state.config, state.layout)
    z1 = feats @ (state.w1 * m1).T + state.b1
    hidden = np.tanh(z1)
    net = hidden @ (state.w2 * m2).T
    gate = location_gate(dispersion)[:, None]
    logits = gate * net[:, :k] + state.b2[:k]
    locations = MID * (gate * net[:, k:2 * k] + state.b2[k:2 * k] * gate + 1.0) \
        + state.anchor_gates[None, :] * (anchors[:, None] - MID)
    ls_raw = gate * net[:, 2 * k:] + state.b2[2 * k:] \
        + state.dispersion_gates[None, :] * dispersion[:, None]
    log_scales = np.maximum(ls_raw, mx.LOG_SCALE_FLOOR)
    comp_lp = mx.component_log_pmf(targets, locations, log_scales)
    m = logits.max(axis=1, keepdims=True)
    log_norm = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
    log_w = logits - log_norm
    t = log_w + comp_lp
    mt = t.max(axis=1, keepdims=True)
    log_p = (mt + np.log(np.exp(t - mt).sum(axis=1, keepdims=True)))[:, 0]
    cache = dict(feats=feats, hidden=hidden, logits=logits, locations=locations,
                 ls_raw=ls_raw, log_scales=log_scales, log_w=log_w, comp_lp=comp_lp,
                 log_p=log_p, targets=targets, anchors=anchors, dispersion=dispersion,
                 gate=gate, m1=m1, m2=m2)
    return log_p, cache


def _backward(state: ModelState, cache):
    """Gradients of the mean negative log-likelihood over the batch."""
    k = state.config.num_mix
    n = cache["targets"].size
    log_w, comp_lp, log_p = cache["log_w"], cache["comp_lp"], cache["log_p"]
    resp = np.exp(log_w + comp_lp - log_p[:, None])
    weights = np.exp(log_w)
    d_logits = (weights - resp) / n
    d_mu_comp, d_ls_comp = mx.component_grad_terms(
        cache["targets"], cache["locations"], cache["log_scales"])
    d_mu = -resp * d_mu_comp / n
    d_ls = -resp * d_ls_comp / n
    d_ls[cache["ls_raw"] < mx.LOG_SCALE_FLOOR] = 0.0  # scale floor subgradient
    d_anchor_gates = (d_mu * (cache["anchors"][:, None] - MID)).sum(axis=0)
    d_dispersion_gates = (d_ls * cache["dispersion"][:, None]).sum(axis=0)
    gate = cache["gate"]
    # the network path (and the location bias) is contrast-gated; the logit
    # and scale biases are not, so they pin the flat-context mixture
    d_net = np.concatenate([d_logits * gate, d_mu * MID * gate, d_ls * gate], axis=1)
    d_b2 = np.concatenate([d_logits.sum(axis=0), (d_mu * MID * gate).sum(axis=0),
                           d_ls.sum(axis=0)])
    hidden = cache["hidden"]
    d_w2 = (d_net.T @ hidden) * cache["m2"]
    d_hidden = d_net @ (state.w2 * cache["m2"])
    d_z1 = d_hidden * (1.0 - hidden ** 2)
    d_w1 = (d_z1.T @ cache["feats"]) * cache["m1"]
    d_b1 = d_z1.sum(axis=0)
    return [d_w1, d_b1, d_w2, d_b2, d_anchor_gates, d_dispersion_gates]


def batch_nll_and_grads(state: ModelState, imgs: np.ndarray):
    """Mean per-subpixel NLL of an image stack and its parameter gradients."""
    feats, targets, anchors, dispersion = F.extract(state.layout, imgs)
    log_p, cache = _forward(state, feats, targets, anchors, dispersion)
    return -log_p.mean(), _backward(state, cache)


def _check_shape(state: ModelState, img: ImageTensor):
    if img.pixels.shape != state.input_shape:
        raise ShapeError(f"image shape {img.pixels.shape} does not match the "
                         f"model's input shape {state.input_shape}")


def log_likelihood(state: ModelState, img: ImageTensor, per_subpixel: bool = False):
    """Total log-likelihood in nats; optionally also the per-subpixel vector
    in raster/channel order (the total is exactly its np.sum)."""
    _check_shape(state, img)
    feats, targets, anchors, dispersion = F.extract(state.layout, img.pixels[None])
    log_p, _ = _forward(state, feats, targets, anchors, dispersion)
    total = float(np.sum(log_p))
    if per_subpixel:
        return total, log_p
    return total


def log_likelihood_batch(state: ModelState, imgs, batch_size: int = 64) -> np.ndarray:
    """Log-likelihoods for a Dataset or (N, H, W, C) stack."""
    arr = imgs.stack() if isinstance(imgs, Dataset) else np.asarray(imgs)
    if arr.shape[1:] != state.input_shape:
        raise ShapeError(f"stack shape {arr.shape[1:]} does not match the "
                         f"model's input shape {state.input_shape}")
    per_image = arr.shape[1] * arr.shape[2] * arr.shape[3]
    out = np.empty(arr.shape[0])
    for i in range(0, arr.shape[0], batch_size):
        chunk = arr[i:i + batch_size]
        feats, targets, anchors, dispersion = F.extract(state.layout, chunk)
        log_p, _ = _forward(state, feats, targets, anchors, dispersion)
        out[i:i + chunk.shape[0]] = log_p.reshape(-1, per_image).sum(axis=1)
    return out


@dataclass(frozen=True)
class PredictiveStats:
    recon_error: float  # mean |dominant-component location - actual value|
    avg_scale: float    # mean over subpixels of the weight-weighted scale


def predictive_stats(state: ModelState, img: ImageTensor) -> PredictiveStats:
    _check_shape(state, img)
    feats, targets, anchors, dispersion = F.extract(state.layout, img.pixels[None])
    _, cache = _forward(state, feats, targets, anchors, dispersion)
    weights = np.exp(cache["log_w"])
    dominant = weights.argmax(axis=1)
    rows = np.arange(targets.size)
    recon = np.abs(cache["locations"][rows, dominant] - targets).mean()
    scales = np.exp(cache["log_scales"])
    avg_scale = (weights * scales).sum(axis=1).mean()
    return PredictiveStats(recon_error=float(recon), avg_scale=float(avg_scale))


def ablate_long_range(state: ModelState) -> ModelState:
    """Copy with first-layer weights on long-range-tap and positional features
    zeroed; the local pathway is untouched."""
    out = state.copy()
    cols = list(state.layout.long_range_columns) + list(state.layout.positional_columns)
    out.w1[:, cols] = 0.0
    return out


def mutate_for_background(img: ImageTensor, mu: float, seed: int) -> ImageTensor:
    """Each subpixel independently replaced with uniform noise with rate mu."""
    if not 0.0 <= mu <= 1.0:
        raise DomainError(f"mutation rate must lie in [0, 1], got {mu}")
    rng = make_rng(seed)
    pix = img.pixels
    mask = rng.random(pix.shape) < mu
    noise = rng.integers(0, 256, size=pix.shape, dtype=np.int64)
    return ImageTensor(np.where(mask, noise, pix).astype(np.uint8))


def mutate_dataset(dataset: Dataset, mu: float, seed: int) -> Dataset:
    rngs = np.random.SeedSequence(seed).spawn(len(dataset))
    images = []
    for im, ss in zip(dataset.images, rngs):
        rng = np.random.Generator(np.random.PCG64(ss))
        pix = im.pixels
        mask = rng.random(pix.shape) < mu
        noise = rng.integers(0, 256, size=pix.shape, dtype=np.int64)
        images.append(ImageTensor(np.where(mask, noise, pix).astype(np.uint8)))
    return Dataset(f"{dataset.id}-mut{mu}", images, split=dataset.split)


def train(config: ModelConfig, train_set: Dataset, val_set: Dataset) -> ModelState:
    """Adam-style minibatch training; keeps the epoch with best validation NLL."""
    if train_set.shape != val_set.shape:
        raise ShapeError("train and validation sets must share one image shape")
    state = init_state(config, train_set.shape)
    train_arr = train_set.stack()
    val_arr = val_set.stack()
    adam_m = [np.zeros_like(p) for p in state.params]
    adam_v = [np.zeros_like(p) for p in state.params]
    shuffle_rng = make_rng(config.seed + 1)
    step = 0
    best_params = None
    best_val = np.inf
    n = train_arr.shape[0]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_nll = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            nll, grads = batch_nll_and_grads(state, train_arr[idx])
            if not np.isfinite(nll):
                raise TrainingDivergenceError(epoch)
            epoch_nll += nll * idx.size
            n_batches += idx.size
            step += 1
            params = state.params
            for j, grad in enumerate(grads):
                adam_m[j] = ADAM_BETA1 * adam_m[j] + (1 - ADAM_BETA1) * grad
                adam_v[j] = ADAM_BETA2 * adam_v[j] + (1 - ADAM_BETA2) * grad * grad
                m_hat = adam_m[j] / (1 - ADAM_BETA1 ** step)
                v_hat = adam_v[j] / (1 - ADAM_BETA2 ** step)
                params[j] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        val_nll = -log_likelihood_batch(state, val_arr).sum() / val_arr[0].size / val_arr.shape[0]
        train_nll = epoch_nll / n_batches
        state.history.append({"epoch": epoch, "train_nll": float(train_nll),
                              "val_nll": float(val_nll)})
        if val_nll < best_val:
            best_val = val_nll
            best_params = [p.copy() for p in state.params]
    if best_params is not None:
        state.w1, state.b1, state.w2, state.b2, state.anchor_gates, state.dispersion_gates = best_params
    return state


# -- checkpoint io ------------------------------------------------------------

def save_checkpoint(state: ModelState, path) -> None:
    config = state.config
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": {
            "context_radius": config.context_radius,
            "long_range_taps": (None if config.long_range_taps is None
                                else [list(t) for t in config.long_range_taps]),
            "positional_features": config.positional_features,
            "hidden_width": config.hidden_width,
            "num_mix": config.num_mix,
            "channels_conditioning": config.channels_conditioning,
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "seed": config.seed,
            "long_range_unit_fraction": config.long_range_unit_fraction,
        },
        "input_shape": list(state.input_shape),
        "history": state.history,
    }
    arrays = {name: np.ascontiguousarray(arr, dtype="<f8")
              for name, arr in zip(("w1", "b1", "w2", "b2", "anchor_gates", "dispersion_gates"),
                                   state.params)}
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> ModelState:
    with np.load(path) as npz:
        meta = json.loads(bytes(npz["meta"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"unsupported checkpoint format {meta.get('format')!r}")
        cfg = meta["config"]
        config = ModelConfig(
            context_radius=cfg["context_radius"],
            long_range_taps=(None if cfg["long_range_taps"] is None
                             else tuple(tuple(t) for t in cfg["long_range_taps"])),
            positional_features=cfg["positional_features"],
            hidden_width=cfg["hidden_width"],
            num_mix=cfg["num_mix"],
            channels_conditioning=cfg["channels_conditioning"],
            learning_rate=cfg["learning_rate"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            seed=cfg["seed"],
            long_range_unit_fraction=cfg.get("long_range_unit_fraction", 0.0),
        )
        layout = F.build_layout(config, tuple(meta["input_shape"]))
        state = ModelState(config, layout,
                           npz["w1"].astype(np.float64), npz["b1"].astype(np.float64),
                           npz["w2"].astype(np.float64), npz["b2"].astype(np.float64),
                           npz["anchor_gates"].astype(np.float64),
                           npz["dispersion_gates"].astype(np.float64),
                           history=meta["history"])
    return state
