"""Diagnostic probes: local-perturbation degradation, compressed-length vs
log-likelihood tables, and the long-range ablation comparison."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .complexity import compressed_length_bits
from .density import ablate_long_range, log_likelihood, log_likelihood_batch
from .errors import DomainError, ValidationError
from .imaging import Dataset, ImageTensor
from .rng import make_rng


@dataclass(frozen=True)
class ProbeResult:
    degradation_pct: tuple[float, ...]  # one mean-over-sites value per sample
    q25: float
    median: float
    q75: float

    @classmethod
    def from_values(cls, values) -> "ProbeResult":
        arr = np.asarray(list(values), dtype=np.float64)
        if arr.size == 0:
            raise ValidationError("no probe values")
        q25, med, q75 = np.percentile(arr, [25, 50, 75])
        return cls(tuple(float(v) for v in arr), float(q25), float(med), float(q75))


def interior_sites(height: int, width: int, patch: int) -> list[tuple[int, int]]:
    half = patch // 2
    return [(r, c) for r in range(half, height - half) for c in range(half, width - half)]


def local_perturbation_degradation(state, img: ImageTensor, patch: int = 3,
                                   n_sites: int | None = 64, seed: int = 0) -> float:
    """Mean percentage log-likelihood degradation when the patch around each
    probed pixel is replaced with uniform random values.

    degradation% = 100 * (LL_orig - LL_perturbed) / |LL_orig| per site,
    averaged over sites. With n_sites None, every interior site is probed.
    """
    if patch % 2 == 0:
        raise ValidationError("patch must be odd")
    h, w, c = img.pixels.shape
    if patch > min(h, w):
        raise ValidationError(f"patch {patch} exceeds image size {h}x{w}")
    ll_orig = log_likelihood(state, img)
    if ll_orig == 0.0:
        raise DomainError("original log-likelihood is zero; degradation undefined")
    sites = interior_sites(h, w, patch)
    rng = make_rng(seed)
    if n_sites is not None and n_sites < len(sites):
        chosen = rng.permutation(len(sites))[:n_sites]
        sites = [sites[i] for i in chosen]
    half = patch // 2
    perturbed = []
    for r, col in sites:
        noisy = img.pixels.copy()
        noisy[r - half:r + half + 1, col - half:col + half + 1, :] = rng.integers(
            0, 256, size=(patch, patch, c), dtype=np.int64).astype(np.uint8)
        perturbed.append(noisy)
    lls = log_likelihood_batch(state, np.stack(perturbed))
    degradation = 100.0 * (ll_orig - lls) / abs(ll_orig)
    return float(degradation.mean())


def degradation_probe(state, dataset: Dataset, patch: int = 3,
                      n_sites: int | None = 64, seed: int = 0) -> ProbeResult:
    rngs = np.random.SeedSequence(seed).spawn(len(dataset))
    values = []
    for i, img in enumerate(dataset.images):
        site_seed = int(rngs[i].generate_state(1)[0])
        values.append(local_perturbation_degradation(state, img, patch, n_sites, site_seed))
    return ProbeResult.from_values(values)


def complexity_vs_ll_table(state, datasets, codec: str = "png") -> list[dict]:
    """One row per sample: dataset, sample_id, bits, normalized_bpd, loglik."""
    rows = []
    for ds in datasets:
        lls = log_likelihood_batch(state, ds)
        for i, img in enumerate(ds.images):
            est = compressed_length_bits(img, codec)
            rows.append({
                "dataset": ds.id,
                "sample_id": ds.sample_id(i),
                "bits": est.bits,
                "normalized_bpd": est.normalized_bpd,
                "loglik": float(lls[i]),
            })
    return rows


def write_table(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise ValidationError("no rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def ablation_delta(state, id_set: Dataset, ood_set: Dataset) -> dict[str, float]:
    """Median |LL(model) - LL(long-range-ablated model)| on each set."""
    ablated = ablate_long_range(state)
    out = {}
    for name, ds in (("id", id_set), ("ood", ood_set)):
        full = log_likelihood_batch(state, ds)
        cut = log_likelihood_batch(ablated, ds)
        out[f"median_abs_delta_{name}"] = float(np.median(np.abs(full - cut)))
    return out
