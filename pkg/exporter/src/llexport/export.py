"""Export per-(sample, transform) log-likelihoods as an llcache/1 file."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .golden import verify_golden
from .models import load_model
from .transforms import SAMPLED, enumerate_members, apply_transform

CACHE_FORMAT = "llcache/1"


def load_idx_dataset(path) -> tuple[str, np.ndarray]:
    """Read a dataset directory (meta.json + images.idx) or a bare .idx file."""
    path = Path(path)
    if path.is_dir():
        meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
        dataset_id = meta["id"]
        raw = (path / "images.idx").read_bytes()
    else:
        dataset_id = path.stem
        raw = path.read_bytes()
    if raw[:2] != b"\x00\x00" or raw[2] != 0x08:
        raise ValueError("not an unsigned-byte IDX stream")
    ndim = raw[3]
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    arr = np.frombuffer(raw[4 + 4 * ndim:], dtype=np.uint8).reshape(dims)
    if ndim == 3:
        arr = arr[..., None]
    return dataset_id, arr.copy()


@dataclass(frozen=True)
class ExportJob:
    model_kind: str
    checkpoint: str
    dataset: str
    golden: str
    output: str
    family: str | None = "stir"   # None = identity only
    family_seed: int = 0
    batch_size: int = 64
    model_id: str | None = None
    dataset_id: str | None = None


def export(job: ExportJob) -> Path:
    """Verify golden vectors, evaluate the model under every transform in
    {identity} + family, and write the llcache file."""
    n_golden = verify_golden(job.golden)
    model = load_model(job.model_kind, job.checkpoint)
    dataset_id, images = load_idx_dataset(job.dataset)
    if job.dataset_id:
        dataset_id = job.dataset_id
    model_id = job.model_id or f"{job.model_kind}:{Path(job.checkpoint).stem}"

    members = [("identity", None)]
    if job.family:
        seed = job.family_seed if job.family in SAMPLED else None
        members += enumerate_members(job.family, seed)

    def batched_lls(arr):
        out = np.empty(arr.shape[0])
        for i in range(0, arr.shape[0], job.batch_size):
            chunk = arr[i:i + job.batch_size]
            out[i:i + chunk.shape[0]] = model.log_likelihood(chunk)
        return out

    lines = [json.dumps({
        "format": CACHE_FORMAT,
        "model_id": model_id,
        "dataset_id": dataset_id,
        "log_base": "e",
        "transform_ids": [tid for tid, _ in members],
    })]
    for tid, descriptor in members:
        if tid == "identity":
            transformed = images
        else:
            transformed = np.stack([
                np.ascontiguousarray(apply_transform(tid, img, descriptor=descriptor))
                for img in images])
        lls = batched_lls(transformed)
        if not np.isfinite(lls).all():
            raise ValueError(f"model produced non-finite log-likelihoods under {tid}")
        lines.extend(json.dumps({"sample_id": f"{i:06d}", "transform_id": tid,
                                 "loglik": float(v)})
                     for i, v in enumerate(lls))
    out = Path(job.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
