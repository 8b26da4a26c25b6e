"""Compressed-length complexity estimates.

Two codecs, both lossless with fixed configurations so lengths are
deterministic per image:

  * "png": Pillow PNG encoding, mode L (1 channel) or RGB (3 channels),
    compress_level 9, no optimizer pass; bits include the whole stream
    (signature, chunks, CRCs).
  * "deflate-raw": headerless DEFLATE (zlib level 9, wbits -15) over the raw
    row-major subpixel buffer.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import CodecError, ValidationError
from .imaging import ImageTensor

CODECS = ("png", "deflate-raw")
PNG_COMPRESS_LEVEL = 9
DEFLATE_LEVEL = 9


@dataclass(frozen=True)
class ComplexityEstimate:
    codec: str
    bits: float
    normalized_bpd: float


def _encode_png(img: ImageTensor) -> bytes:
    arr = img.pixels
    mode = "L" if img.channels == 1 else "RGB"
    pil = Image.fromarray(arr[..., 0] if img.channels == 1 else arr, mode=mode)
    buf = io.BytesIO()
    try:
        pil.save(buf, format="PNG", compress_level=PNG_COMPRESS_LEVEL)
    except Exception as exc:  # pragma: no cover - Pillow failures are exotic
        raise CodecError(f"png encode failed: {exc}") from exc
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        pil = Image.open(io.BytesIO(data))
        arr = np.asarray(pil, dtype=np.uint8)
    except Exception as exc:
        raise CodecError(f"png decode failed: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def _encode_deflate_raw(img: ImageTensor) -> bytes:
    comp = zlib.compressobj(DEFLATE_LEVEL, zlib.DEFLATED, -15)
    return comp.compress(img.data) + comp.flush()


def compressed_length_bits(img: ImageTensor, codec: str = "png") -> ComplexityEstimate:
    """Length of the lossless encoding, in bits (8x encoded byte count)."""
    if codec == "png":
        encoded = _encode_png(img)
    elif codec == "deflate-raw":
        encoded = _encode_deflate_raw(img)
    else:
        raise ValidationError(f"unknown codec {codec!r}")
    bits = 8.0 * len(encoded)
    n_subpixels = img.height * img.width * img.channels
    return ComplexityEstimate(codec=codec, bits=bits, normalized_bpd=bits / n_subpixels)


def best_length(img: ImageTensor, codecs=CODECS) -> ComplexityEstimate:
    """Minimum compressed length over the codec set; records the winner."""
    codecs = tuple(codecs)
    if not codecs:
        raise ValidationError("codec set must be non-empty")
    estimates = [compressed_length_bits(img, c) for c in codecs]
    return min(estimates, key=lambda e: e.bits)
