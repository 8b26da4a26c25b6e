"""Image tensors, IDX and image-directory ingestion, synthetic generators."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IdxFormatError, IdxLengthError, IdxTypeError, ShapeError, ValidationError
from .rng import make_rng

IDX_UBYTE = 0x08


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C 8-bit image, row-major, channel-last."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3:
            raise ShapeError(f"expected 3-d pixel array, got shape {p.shape}")
        if p.shape[2] not in (1, 3):
            raise ShapeError(f"channels must be 1 or 3, got {p.shape[2]}")
        if p.dtype != np.uint8:
            if np.issubdtype(p.dtype, np.integer) and p.min() >= 0 and p.max() <= 255:
                p = p.astype(np.uint8)
            else:
                raise ValidationError("subpixels must be integers in [0, 255]")
        p = np.ascontiguousarray(p)
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> bytes:
        """Flat subpixel buffer, length height * width * channels."""
        return self.pixels.tobytes()

    def __eq__(self, other):
        return isinstance(other, ImageTensor) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.data))


@dataclass
class Dataset:
    id: str
    images: list[ImageTensor]
    split: str = "test"

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValidationError(f"split must be train/val/test, got {self.split!r}")
        if not self.images:
            raise ValidationError("dataset must be non-empty")
        shape = self.images[0].pixels.shape
        for im in self.images:
            if im.pixels.shape != shape:
                raise ShapeError(f"inhomogeneous image shapes: {im.pixels.shape} vs {shape}")

    def __len__(self):
        return len(self.images)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images[0].pixels.shape

    def stack(self) -> np.ndarray:
        """(N, H, W, C) uint8 view of the whole dataset."""
        return np.stack([im.pixels for im in self.images])

    def sample_id(self, i: int) -> str:
        return f"{i:06d}"

    @classmethod
    def from_array(cls, id: str, arr: np.ndarray, split: str = "test") -> "Dataset":
        return cls(id=id, images=[ImageTensor(a) for a in arr], split=split)


SYNTHETIC_KINDS = ("noise", "constant", "colorseq", "oriented-gradient", "sprite-grid")

GRADIENT_LO = 32
GRADIENT_HI = 224
JITTER = 16
SPRITE_BG = 32
SPRITE_FG = 224
SPRITE_CELL = 3


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    count: int
    seed: int
    shape: tuple[int, int, int] = (32, 32, 1)
    seq_len: int | None = None            # colorseq only
    orientation: str | None = None        # oriented-gradient only
    enumerate_levels: bool = False        # constant only: emit levels 0..255 in order

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValidationError(f"unknown synthetic kind {self.kind!r}")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        h, w, c = self.shape
        if h < 1 or w < 1 or c not in (1, 3):
            raise ShapeError(f"bad shape {self.shape}")
        if self.kind == "colorseq" and (self.seq_len is None or self.seq_len < 1):
            raise ValidationError("colorseq requires seq_len >= 1")
        if self.kind == "oriented-gradient" and self.orientation not in ("vertical", "horizontal"):
            raise ValidationError("oriented-gradient requires orientation vertical|horizontal")
        if self.enumerate_levels and self.kind != "constant":
            raise ValidationError("enumerate_levels only applies to constant images")


def _gradient_base(shape, orientation):
    h, w, c = shape
    if orientation == "vertical":
        ax = np.arange(h, dtype=np.float64)
        ramp = np.round(GRADIENT_LO + (GRADIENT_HI - GRADIENT_LO) * ax / max(h - 1, 1))
        return np.broadcast_to(ramp[:, None, None], shape)
    ax = np.arange(w, dtype=np.float64)
    ramp = np.round(GRADIENT_LO + (GRADIENT_HI - GRADIENT_LO) * ax / max(w - 1, 1))
    return np.broadcast_to(ramp[None, :, None], shape)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic image sets; see SyntheticSpec for the kinds."""
    rng = make_rng(spec.seed)
    h, w, c = spec.shape
    n = spec.count
    kind = spec.kind

    if kind == "noise":
        arr = rng.integers(0, 256, size=(n, h, w, c), dtype=np.int64)
    elif kind == "constant":
        if spec.enumerate_levels:
            levels = (np.arange(n) % 256).astype(np.int64)
            vals = np.repeat(levels[:, None, None, None], c, axis=3)
        else:
            vals = rng.integers(0, 256, size=(n, 1, 1, c))
        arr = np.broadcast_to(vals, (n, h, w, c)).copy()
    elif kind == "colorseq":
        k = spec.seq_len
        arr = np.empty((n, h, w, c), dtype=np.int64)
        idx = (np.arange(h * w) % k).reshape(h, w)
        for i in range(n):
            palette = rng.integers(0, 256, size=(k, c))
            arr[i] = palette[idx]
    elif kind == "oriented-gradient":
        base = _gradient_base(spec.shape, spec.orientation)
        jit = rng.integers(-JITTER, JITTER + 1, size=(n, h, w, c))
        arr = np.clip(base[None] + jit, 0, 255)
    elif kind == "sprite-grid":
        cells_r = max((h // 2) // SPRITE_CELL, 1)
        cells_c = max(w // SPRITE_CELL, 1)
        arr = np.full((n, h, w, c), SPRITE_BG, dtype=np.int64)
        for i in range(n):
            cr = int(rng.integers(0, cells_r))
            cc = int(rng.integers(0, cells_c))
            r0, c0 = cr * SPRITE_CELL, cc * SPRITE_CELL
            arr[i, r0:r0 + SPRITE_CELL, c0:c0 + SPRITE_CELL, :] = SPRITE_FG
        jit = rng.integers(-JITTER, JITTER + 1, size=(n, h, w, c))
        arr = np.clip(arr + jit, 0, 255)
    else:  # pragma: no cover - guarded by SyntheticSpec
        raise ValidationError(kind)

    name = kind if kind != "colorseq" else f"colorseq{spec.seq_len}"
    return Dataset.from_array(f"synth-{name}-{spec.seed}", arr.astype(np.uint8))


def split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint (train, val) partition; validation size rounds down."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(dataset)
    n_val = int(n * val_fraction)
    n_train = n - n_val
    if n_val == 0 or n_train == 0:
        raise ConfigError(f"split of {n} images at {val_fraction} leaves an empty part")
    order = make_rng(seed).permutation(n)
    train_idx, val_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    return (
        Dataset(dataset.id, [dataset.images[i] for i in train_idx], split="train"),
        Dataset(dataset.id, [dataset.images[i] for i in val_idx], split="val"),
    )


# -- IDX format -------------------------------------------------------------

def parse_idx(data: bytes) -> Dataset:
    """Parse a big-endian IDX byte stream of unsigned-byte images.

    3-d (count, H, W) becomes channels=1; 4-d (count, H, W, C) keeps C.
    """
    if len(data) < 4:
        raise IdxFormatError("stream shorter than the 4-byte magic")
    z0, z1, type_byte, ndim = data[0], data[1], data[2], data[3]
    if z0 != 0 or z1 != 0:
        raise IdxFormatError(f"bad magic prefix {data[:2].hex()}")
    if type_byte != IDX_UBYTE:
        raise IdxTypeError(f"unsupported element type 0x{type_byte:02x}")
    if ndim not in (3, 4):
        raise IdxFormatError(f"expected 3-d or 4-d image IDX, got {ndim}-d")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise IdxLengthError("truncated dimension table")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = int(np.prod(dims))
    payload = data[header_len:]
    if len(payload) != expected:
        raise IdxLengthError(f"payload has {len(payload)} bytes, header requires {expected}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    if ndim == 3:
        arr = arr[..., None]
    if arr.shape[3] not in (1, 3):
        raise ShapeError(f"channel count {arr.shape[3]} unsupported")
    return Dataset.from_array("idx", arr.copy())


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Parse a 1-d IDX label stream (accepted and returned, never used for scoring)."""
    if len(data) < 8 or data[0] != 0 or data[1] != 0:
        raise IdxFormatError("bad label magic")
    if data[2] != IDX_UBYTE:
        raise IdxTypeError(f"unsupported element type 0x{data[2]:02x}")
    if data[3] != 1:
        raise IdxFormatError(f"expected 1-d labels, got {data[3]}-d")
    (n,) = struct.unpack(">I", data[4:8])
    if len(data) != 8 + n:
        raise IdxLengthError("label payload length mismatch")
    return np.frombuffer(data[8:], dtype=np.uint8).copy()


def write_idx(dataset: Dataset) -> bytes:
    arr = dataset.stack()
    n, h, w, c = arr.shape
    if c == 1:
        header = struct.pack(">BBBB3I", 0, 0, IDX_UBYTE, 3, n, h, w)
        return header + arr[..., 0].tobytes()
    header = struct.pack(">BBBB4I", 0, 0, IDX_UBYTE, 4, n, h, w, c)
    return header + arr.tobytes()


# -- dataset directories ----------------------------------------------------

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif")


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    h, w, c = dataset.shape
    meta = {
        "id": dataset.id,
        "split": dataset.split,
        "count": len(dataset),
        "height": h,
        "width": w,
        "channels": c,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (path / "images.idx").write_bytes(write_idx(dataset))


def load_image_dir(path: str | Path, shape: tuple[int, int, int]) -> Dataset:
    """Load a directory of image files, lexicographic filename order.

    Images convert to the target channel count and resize by nearest
    neighbour to (H, W) so results are identical across platforms.
    """
    from PIL import Image

    path = Path(path)
    h, w, c = shape
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ValidationError(f"no image files in {path}")
    mode = "L" if c == 1 else "RGB"
    images = []
    for f in files:
        im = Image.open(f).convert(mode)
        if im.size != (w, h):
            im = im.resize((w, h), Image.NEAREST)
        arr = np.asarray(im, dtype=np.uint8)
        if c == 1:
            arr = arr[..., None]
        images.append(ImageTensor(arr))
    return Dataset(id=path.name, images=images)


def load_dataset(path: str | Path, shape: tuple[int, int, int] | None = None,
                 split: str | None = None) -> Dataset:
    """Load either a saved dataset directory (meta.json + images.idx) or a raw
    image directory (requires an explicit target shape)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    meta_path = path / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        ds = parse_idx((path / "images.idx").read_bytes())
        return Dataset(meta["id"], ds.images, split=split or meta.get("split", "test"))
    if path.is_file() and path.suffix == ".idx":
        ds = parse_idx(path.read_bytes())
        return Dataset(path.stem, ds.images, split=split or "test")
    if shape is None:
        raise ValidationError(f"{path} is a raw image directory; a target shape is required")
    ds = load_image_dir(path, shape)
    if split:
        ds.split = split
    return ds
