"""Bijective image transformations: the stir family (rotations/reflections),
shake families (patch derangements), and their sampled combinations.

Every transform is an exact bijection on uint8 image tensors: applying it and
then its inverse reproduces the input byte for byte, and the multiset of
subpixel values is preserved. Canonical string ids (e.g. "stir/rot90",
"shake/q04") are the wire names used in likelihood caches.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .imaging import ImageTensor
from .rng import make_rng

FAMILIES = ("stir", "shake", "vslat", "hslat", "shake16", "stirshake-coord", "stirshake-indep")
SAMPLED_FAMILIES = ("shake16", "stirshake-coord", "stirshake-indep")
N_SAMPLED = 20

# stir elements as (flip about the vertical midline first, then k clockwise
# quarter turns); the flipped elements are reflections, hence self-inverse
STIR_ELEMENTS = (
    ("rot90", False, 1),
    ("rot180", False, 2),
    ("rot270", False, 3),
    ("flip", True, 0),
    ("flip-rot90", True, 1),
    ("flip-rot180", True, 2),
    ("flip-rot270", True, 3),
)
STIR_BY_NAME = {name: (flip, k) for name, flip, k in STIR_ELEMENTS}
STIR_INVERSE = {
    "rot90": "rot270", "rot180": "rot180", "rot270": "rot90",
    "flip": "flip", "flip-rot90": "flip-rot90",
    "flip-rot180": "flip-rot180", "flip-rot270": "flip-rot270",
}


def derangements(n: int) -> list[tuple[int, ...]]:
    """All fixed-point-free permutations of range(n), lexicographic."""
    return [p for p in itertools.permutations(range(n)) if all(p[i] != i for i in range(n))]


DERANGEMENTS_4 = derangements(4)  # exactly 9 of them


@dataclass(frozen=True)
class TransformId:
    family: str
    index: int
    descriptor: object = None
    seed: int | None = None

    @property
    def canonical_id(self) -> str:
        if self.family == "identity":
            return "identity"
        if self.family == "stir":
            return f"stir/{self.descriptor}"
        if self.family == "shake":
            return f"shake/q{self.index:02d}"
        if self.family in ("vslat", "hslat"):
            return f"{self.family}/{self.index:02d}"
        return f"{self.family}/{self.seed}/{self.index}"

    def __str__(self):
        return self.canonical_id


IDENTITY = TransformId("identity", 0)


@dataclass(frozen=True)
class TransformFamily:
    family: str
    members: tuple[TransformId, ...]
    seed: int | None = None

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def transform_ids(self) -> list[str]:
        return [t.canonical_id for t in self.members]


def enumerate_family(family: str, seed: int | None = None) -> TransformFamily:
    """The canonical members of a transform family.

    Deterministic for the enumerable families; the sampled families
    (shake16, stirshake-*) require a seed and sample without replacement.
    """
    if family == "stir":
        members = tuple(TransformId("stir", i, name) for i, (name, _, _) in enumerate(STIR_ELEMENTS))
        return TransformFamily("stir", members)
    if family in ("shake", "vslat", "hslat"):
        members = tuple(TransformId(family, i, p) for i, p in enumerate(DERANGEMENTS_4))
        return TransformFamily(family, members)
    if family not in SAMPLED_FAMILIES:
        raise ValidationError(f"unknown transform family {family!r}")
    if seed is None:
        raise ValidationError(f"family {family!r} is sampled and requires a seed")
    rng = make_rng(seed)
    if family == "shake16":
        chosen: list[tuple[int, ...]] = []
        seen = set()
        while len(chosen) < N_SAMPLED:
            p = tuple(int(v) for v in rng.permutation(16))
            if any(p[i] == i for i in range(16)) or p in seen:
                continue
            seen.add(p)
            chosen.append(p)
        members = tuple(TransformId("shake16", i, p, seed) for i, p in enumerate(chosen))
        return TransformFamily("shake16", members, seed)
    if family == "stirshake-coord":
        # 7 stir elements x 9 quadrant derangements = 63 combinations
        space = [(s[0], p) for s in STIR_ELEMENTS for p in DERANGEMENTS_4]
        order = rng.permutation(len(space))[:N_SAMPLED]
        members = tuple(TransformId("stirshake-coord", i, space[j], seed) for i, j in enumerate(order))
        return TransformFamily("stirshake-coord", members, seed)
    # stirshake-indep: an independent stir element per quadrant, then a derangement
    chosen = []
    seen = set()
    while len(chosen) < N_SAMPLED:
        names = tuple(STIR_ELEMENTS[int(i)][0] for i in rng.integers(0, 7, size=4))
        p = DERANGEMENTS_4[int(rng.integers(0, 9))]
        d = (names, p)
        if d in seen:
            continue
        seen.add(d)
        chosen.append(d)
    members = tuple(TransformId("stirshake-indep", i, d, seed) for i, d in enumerate(chosen))
    return TransformFamily("stirshake-indep", members, seed)


def family_with_identity(fam: TransformFamily) -> list[TransformId]:
    return [IDENTITY, *fam.members]


# -- raw-array transform kernels ---------------------------------------------

def _rot90cw(a: np.ndarray, k: int) -> np.ndarray:
    return np.rot90(a, k=-k, axes=(0, 1))


def _stir_array(a: np.ndarray, name: str) -> np.ndarray:
    flip, k = STIR_BY_NAME[name]
    if k % 2 == 1 and a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} requires a square image, got {a.shape[:2]}")
    if flip:
        a = a[:, ::-1, :]
    return _rot90cw(a, k)


def _grid_patches(a: np.ndarray, rows: int, cols: int) -> list[np.ndarray]:
    h, w = a.shape[:2]
    if h % rows or w % cols:
        raise ShapeError(f"image {a.shape[:2]} not divisible into {rows}x{cols} patches")
    ph, pw = h // rows, w // cols
    return [a[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] for r in range(rows) for c in range(cols)]


def _assemble(patches: list[np.ndarray], rows: int, cols: int) -> np.ndarray:
    strips = [np.concatenate(patches[r * cols:(r + 1) * cols], axis=1) for r in range(rows)]
    return np.concatenate(strips, axis=0)


def _permute_patches(a: np.ndarray, perm: tuple[int, ...], rows: int, cols: int) -> np.ndarray:
    patches = _grid_patches(a, rows, cols)
    return _assemble([patches[j] for j in perm], rows, cols)


def _invert_perm(perm: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, j in enumerate(perm):
        inv[j] = i
    return tuple(inv)


def _apply_array(tid: TransformId, a: np.ndarray) -> np.ndarray:
    fam = tid.family
    if fam == "identity":
        return a
    if fam == "stir":
        return _stir_array(a, tid.descriptor)
    if fam == "shake":
        return _permute_patches(a, tid.descriptor, 2, 2)
    if fam == "vslat":
        return _permute_patches(a, tid.descriptor, 1, 4)
    if fam == "hslat":
        return _permute_patches(a, tid.descriptor, 4, 1)
    if fam == "shake16":
        return _permute_patches(a, tid.descriptor, 4, 4)
    if fam == "stirshake-coord":
        stir_name, perm = tid.descriptor
        patches = [_stir_array(p, stir_name) for p in _grid_patches(a, 2, 2)]
        return _assemble([patches[j] for j in perm], 2, 2)
    if fam == "stirshake-indep":
        names, perm = tid.descriptor
        patches = [_stir_array(p, n) for p, n in zip(_grid_patches(a, 2, 2), names)]
        return _assemble([patches[j] for j in perm], 2, 2)
    raise ValidationError(f"unknown transform family {fam!r}")


def _invert_array(tid: TransformId, a: np.ndarray) -> np.ndarray:
    fam = tid.family
    if fam == "identity":
        return a
    if fam == "stir":
        return _stir_array(a, STIR_INVERSE[tid.descriptor])
    if fam in ("shake", "vslat", "hslat", "shake16"):
        inv = TransformId(fam, tid.index, _invert_perm(tid.descriptor), tid.seed)
        return _apply_array(inv, a)
    if fam == "stirshake-coord":
        stir_name, perm = tid.descriptor
        patches = _grid_patches(a, 2, 2)
        patches = [patches[j] for j in _invert_perm(perm)]
        patches = [_stir_array(p, STIR_INVERSE[stir_name]) for p in patches]
        return _assemble(patches, 2, 2)
    if fam == "stirshake-indep":
        names, perm = tid.descriptor
        patches = _grid_patches(a, 2, 2)
        patches = [patches[j] for j in _invert_perm(perm)]
        # after undoing the shuffle, patch i carries stir element names[i]
        patches = [_stir_array(p, STIR_INVERSE[n]) for p, n in zip(patches, names)]
        return _assemble(patches, 2, 2)
    raise ValidationError(f"unknown transform family {fam!r}")


def apply(tid: TransformId, img: ImageTensor) -> ImageTensor:
    """Transformed copy; shape and subpixel multiset are preserved."""
    return ImageTensor(np.ascontiguousarray(_apply_array(tid, img.pixels)))


def invert(tid: TransformId, img: ImageTensor) -> ImageTensor:
    """Exact inverse: invert(t, apply(t, x)) == x."""
    return ImageTensor(np.ascontiguousarray(_invert_array(tid, img.pixels)))


def apply_batch(tid: TransformId, arr: np.ndarray) -> np.ndarray:
    """Apply one transform to an (N, H, W, C) stack."""
    return np.stack([np.ascontiguousarray(_apply_array(tid, a)) for a in arr])


def resolve_transform_id(canonical: str, seed: int | None = None) -> TransformId:
    """Parse a canonical id string back into a TransformId."""
    if canonical == "identity":
        return IDENTITY
    parts = canonical.split("/")
    fam = parts[0]
    if fam == "stir":
        names = [e[0] for e in STIR_ELEMENTS]
        if parts[1] not in names:
            raise ValidationError(f"unknown stir element {parts[1]!r}")
        return TransformId("stir", names.index(parts[1]), parts[1])
    if fam in ("shake", "vslat", "hslat"):
        idx = int(parts[1].lstrip("q"))
        return TransformId(fam, idx, DERANGEMENTS_4[idx])
    if fam in SAMPLED_FAMILIES:
        fam_seed, idx = int(parts[1]), int(parts[2])
        family = enumerate_family(fam, fam_seed)
        return family.members[idx]
    raise ValidationError(f"unknown transform id {canonical!r}")
