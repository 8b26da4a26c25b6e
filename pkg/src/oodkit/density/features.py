"""Causal context features for the built-in density model.

For each target subpixel the model sees, per channel:

  * local tap contrasts: (tap value - anchor) / 127.5 for every causal tap
    within the context radius, zero where the tap is out of bounds;
  * long-range tap contrasts: the same for the configured long-range taps;
  * previous-channel contrasts at the current pixel (zero-padded slots);
  * a local dispersion summary: mean |local tap contrast| over in-bounds
    taps (1.0 at the sole pixel with no causal context);
  * normalized row/column position in [-1, 1].

The anchor is the nearest causal neighbour of the same channel: the pixel to
the left, else the one above, else 127.5 at the top-left corner. Contrast
encoding keeps the features level-free: the absolute level reaches the
mixture only through the anchor gates of the location head, which is what
lets the model behave sanely on flat inputs it never saw. The same-row
anchor also keeps residuals zero-mean on smooth content, so no global
location offset accumulates in the biases. Everything here depends only on
strictly-preceding subpixels in raster/channel order, so per-subpixel
likelihoods are causal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, ValidationError

MID = 127.5
NO_CONTEXT_DISPERSION = 1.0


def causal_local_taps(radius: int) -> list[tuple[int, int]]:
    return [(dr, dc)
            for dr in range(-radius, 1)
            for dc in range(-radius, radius + 1)
            if dr < 0 or (dr == 0 and dc < 0)]


def default_long_range_taps(height: int, width: int) -> list[tuple[int, int]]:
    """Half- and quarter-image offsets, filtered to strictly causal ones."""
    cands = [(-height // 2, 0), (0, -width // 2),
             (-height // 2, -width // 2), (-height // 4, -width // 4)]
    out = []
    for dr, dc in cands:
        if (dr < 0 or (dr == 0 and dc < 0)) and (dr, dc) not in out:
            out.append((dr, dc))
    return out


def validate_taps(taps) -> list[tuple[int, int]]:
    taps = [(int(dr), int(dc)) for dr, dc in taps]
    for dr, dc in taps:
        if not (dr < 0 or (dr == 0 and dc < 0)):
            raise ValidationError(f"tap ({dr}, {dc}) is not causal")
    return taps


@dataclass(frozen=True)
class FeatureLayout:
    """Column bookkeeping for one (shape, config) combination."""

    height: int
    width: int
    channels: int
    local_taps: tuple[tuple[int, int], ...]
    long_range_taps: tuple[tuple[int, int], ...]
    positional: bool
    channels_conditioning: bool

    @property
    def n_local(self) -> int:
        return len(self.local_taps) * self.channels

    @property
    def n_long_range(self) -> int:
        return len(self.long_range_taps) * self.channels

    @property
    def n_prev_channel(self) -> int:
        return (self.channels - 1) if self.channels_conditioning else 0

    @property
    def n_context(self) -> int:
        # + 1 for the dispersion column
        return self.n_local + self.n_long_range + self.n_prev_channel + 1

    @property
    def n_positional(self) -> int:
        return 2 if self.positional else 0

    @property
    def n_features(self) -> int:
        return self.n_context + self.n_positional

    @property
    def local_columns(self) -> np.ndarray:
        return np.arange(0, self.n_local)

    @property
    def long_range_columns(self) -> np.ndarray:
        return np.arange(self.n_local, self.n_local + self.n_long_range)

    @property
    def prev_channel_columns(self) -> np.ndarray:
        start = self.n_local + self.n_long_range
        return np.arange(start, start + self.n_prev_channel)

    @property
    def dispersion_column(self) -> int:
        return self.n_local + self.n_long_range + self.n_prev_channel

    @property
    def positional_columns(self) -> np.ndarray:
        return np.arange(self.n_context, self.n_features)


def build_layout(config, shape: tuple[int, int, int]) -> FeatureLayout:
    h, w, c = shape
    if config.long_range_taps is None:
        lr = default_long_range_taps(h, w)
    else:
        lr = validate_taps(config.long_range_taps)
    local = causal_local_taps(config.context_radius)
    for dr, dc in local + lr:
        if -dr >= h or abs(dc) >= w:
            raise ShapeError(f"tap ({dr}, {dc}) exceeds image shape {shape}")
    return FeatureLayout(
        height=h, width=w, channels=c,
        local_taps=tuple(local), long_range_taps=tuple(lr),
        positional=config.positional_features,
        channels_conditioning=config.channels_conditioning,
    )


def extract(layout: FeatureLayout, imgs: np.ndarray):
    """Features for an (N, H, W, C) uint8 stack.

    Returns (features (N*H*W*C, F), targets (N*H*W*C,), anchors (N*H*W*C,),
    dispersion (N*H*W*C,)) in raster/channel order, channel innermost.
    """
    if imgs.ndim != 4 or imgs.shape[1:] != (layout.height, layout.width, layout.channels):
        raise ShapeError(f"expected (N, {layout.height}, {layout.width}, "
                         f"{layout.channels}), got {imgs.shape}")
    n, h, w, c = imgs.shape
    vals = imgs.astype(np.float64)
    taps = list(layout.local_taps) + list(layout.long_range_taps)
    pad_t = max(-dr for dr, _ in taps)
    pad_l = max(max(-dc for _, dc in taps), 0)
    pad_r = max(max(dc for _, dc in taps), 0)
    padded = np.zeros((n, h + pad_t, w + pad_l + pad_r, c))
    in_bounds = np.zeros((h + pad_t, w + pad_l + pad_r), dtype=bool)
    padded[:, pad_t:, pad_l:pad_l + w, :] = vals
    in_bounds[pad_t:, pad_l:pad_l + w] = True

    def tap_view(dr, dc):
        return (padded[:, pad_t + dr:pad_t + dr + h, pad_l + dc:pad_l + dc + w, :],
                in_bounds[pad_t + dr:pad_t + dr + h, pad_l + dc:pad_l + dc + w])

    anchor = np.empty((n, h, w, c))
    anchor[:, :, 1:, :] = vals[:, :, :-1, :]
    anchor[:, 1:, 0, :] = vals[:, :-1, 0, :]
    anchor[:, 0, 0, :] = MID
    anchor_cnt = np.zeros((h, w))
    for dr, dc in layout.local_taps:
        _, m = tap_view(dr, dc)
        anchor_cnt += m
    has_ctx = anchor_cnt > 0

    feats = np.zeros((n, h, w, c, layout.n_features))
    col = 0
    disp_sum = np.zeros((n, h, w, c))
    for dr, dc in layout.local_taps:
        tv, m = tap_view(dr, dc)
        d = np.where(m[None, :, :, None], (tv - anchor) / MID, 0.0)
        feats[..., col:col + c] = d[:, :, :, None, :]
        disp_sum += np.abs(d)
        col += c
    for dr, dc in layout.long_range_taps:
        tv, m = tap_view(dr, dc)
        d = np.where(m[None, :, :, None], (tv - anchor) / MID, 0.0)
        feats[..., col:col + c] = d[:, :, :, None, :]
        col += c
    if layout.n_prev_channel:
        # slot j holds channel j's contrast when predicting channel > j
        for j in range(c - 1):
            contrast = (vals[..., j:j + 1] - anchor) / MID  # (n, h, w, c) via anchor
            for target in range(c):
                if j < target:
                    feats[:, :, :, target, col] = contrast[..., target]
            col += 1
    dispersion = np.where(has_ctx[None, :, :, None],
                          disp_sum / np.maximum(anchor_cnt, 1)[None, :, :, None],
                          NO_CONTEXT_DISPERSION)
    feats[..., col] = dispersion
    col += 1
    if layout.positional:
        rowf = (2.0 * np.arange(h) / (h - 1) - 1.0) if h > 1 else np.zeros(h)
        colf = (2.0 * np.arange(w) / (w - 1) - 1.0) if w > 1 else np.zeros(w)
        feats[..., col] = rowf[None, :, None, None]
        feats[..., col + 1] = colf[None, None, :, None]

    flat = lambda a: a.reshape(n * h * w * c)
    return (feats.reshape(n * h * w * c, layout.n_features),
            flat(vals),
            flat(anchor),
            flat(dispersion))
