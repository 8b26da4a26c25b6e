"""Independent re-implementation of the toolkit's bijective transforms.

Canonical ids and member ordering must match the scoring toolkit exactly:
stir = rot90, rot180, rot270, flip, flip-rot90, flip-rot180, flip-rot270
(flip first, then clockwise quarter turns); shake/vslat/hslat = the nine
derangements of four patches in lexicographic tuple order, gathered as
out[i] = in[perm[i]]; the sampled families draw from PCG64(SeedSequence(seed))
streams in a fixed procedure. Conformance is enforced against the shared
golden-vector file before any export.
"""

from __future__ import annotations

import itertools

import numpy as np

FAMILIES = ("stir", "shake", "vslat", "hslat", "shake16",
            "stirshake-coord", "stirshake-indep")
SAMPLED = ("shake16", "stirshake-coord", "stirshake-indep")
N_SAMPLED = 20

STIR_NAMES = ("rot90", "rot180", "rot270", "flip",
              "flip-rot90", "flip-rot180", "flip-rot270")

DER4 = [p for p in itertools.permutations(range(4)) if all(p[i] != i for i in range(4))]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _stir(a: np.ndarray, name: str) -> np.ndarray:
    if name.startswith("flip"):
        a = a[:, ::-1, :]
    turns = {"rot90": 1, "rot180": 2, "rot270": 3}.get(name.removeprefix("flip-"), 0)
    if turns % 2 and a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} needs a square image")
    return np.rot90(a, k=-turns, axes=(0, 1))


def _patches(a: np.ndarray, rows: int, cols: int) -> list[np.ndarray]:
    h, w = a.shape[:2]
    if h % rows or w % cols:
        raise ValueError(f"{a.shape[:2]} not divisible into {rows}x{cols}")
    ph, pw = h // rows, w // cols
    return [a[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
            for r in range(rows) for c in range(cols)]


def _assemble(patches, rows, cols):
    return np.concatenate(
        [np.concatenate(patches[r * cols:(r + 1) * cols], axis=1) for r in range(rows)],
        axis=0)


def _shuffle(a, perm, rows, cols):
    ps = _patches(a, rows, cols)
    return _assemble([ps[j] for j in perm], rows, cols)


def enumerate_members(family: str, seed: int | None = None):
    """(canonical_id, descriptor) pairs in the toolkit's canonical order."""
    if family == "stir":
        return [(f"stir/{n}", n) for n in STIR_NAMES]
    if family in ("shake", "vslat", "hslat"):
        fmt = "shake/q{:02d}" if family == "shake" else family + "/{:02d}"
        return [(fmt.format(i), p) for i, p in enumerate(DER4)]
    if family not in SAMPLED:
        raise ValueError(f"unknown family {family!r}")
    if seed is None:
        raise ValueError(f"{family} requires a seed")
    rng = _rng(seed)
    if family == "shake16":
        chosen, seen = [], set()
        while len(chosen) < N_SAMPLED:
            p = tuple(int(v) for v in rng.permutation(16))
            if any(p[i] == i for i in range(16)) or p in seen:
                continue
            seen.add(p)
            chosen.append(p)
        return [(f"shake16/{seed}/{i}", p) for i, p in enumerate(chosen)]
    if family == "stirshake-coord":
        space = [(n, p) for n in STIR_NAMES for p in DER4]
        order = rng.permutation(len(space))[:N_SAMPLED]
        return [(f"stirshake-coord/{seed}/{i}", space[j]) for i, j in enumerate(order)]
    chosen, seen = [], set()
    while len(chosen) < N_SAMPLED:
        names = tuple(STIR_NAMES[int(i)] for i in rng.integers(0, 7, size=4))
        p = DER4[int(rng.integers(0, 9))]
        d = (names, p)
        if d in seen:
            continue
        seen.add(d)
        chosen.append(d)
    return [(f"stirshake-indep/{seed}/{i}", d) for i, d in enumerate(chosen)]


def apply_transform(canonical_id: str, a: np.ndarray,
                    descriptor=None, seed: int | None = None) -> np.ndarray:
    """Apply the transform named by its canonical id to an (H, W, C) array."""
    if canonical_id == "identity":
        return a
    family = canonical_id.split("/")[0]
    if descriptor is None:
        members = dict(enumerate_members(
            family, int(canonical_id.split("/")[1]) if family in SAMPLED else seed))
        descriptor = members[canonical_id]
    if family == "stir":
        return _stir(a, descriptor)
    if family == "shake":
        return _shuffle(a, descriptor, 2, 2)
    if family == "vslat":
        return _shuffle(a, descriptor, 1, 4)
    if family == "hslat":
        return _shuffle(a, descriptor, 4, 1)
    if family == "shake16":
        return _shuffle(a, descriptor, 4, 4)
    if family == "stirshake-coord":
        name, perm = descriptor
        ps = [_stir(p, name) for p in _patches(a, 2, 2)]
        return _assemble([ps[j] for j in perm], 2, 2)
    if family == "stirshake-indep":
        names, perm = descriptor
        ps = [_stir(p, n) for p, n in zip(_patches(a, 2, 2), names)]
        return _assemble([ps[j] for j in perm], 2, 2)
    raise ValueError(f"unknown transform {canonical_id!r}")
