"""Golden transform vectors: the cross-implementation handshake file.

Emits NDJSON records {transform_id, height, width, channels, image_b64,
output_b64} for seeded test images under every registered transform.
External likelihood exporters re-implement the transforms and must
reproduce these outputs byte for byte before they are allowed to export.

Run as: python -m oodkit.golden OUTPUT.ndjson [--seed N] [--size 8]
"""

from __future__ import annotations

import argparse
import base64
import json
from pathlib import Path

import numpy as np

from .imaging import ImageTensor
from .rng import make_rng
from .transforms import FAMILIES, SAMPLED_FAMILIES, apply, enumerate_family

GOLDEN_SEED = 20240
GOLDEN_SIZE = 8  # divisible by 4 and square, so every family applies


def golden_records(seed: int = GOLDEN_SEED, size: int = GOLDEN_SIZE):
    rng = make_rng(seed)
    images = {
        1: ImageTensor(rng.integers(0, 256, size=(size, size, 1), dtype=np.int64).astype(np.uint8)),
        3: ImageTensor(rng.integers(0, 256, size=(size, size, 3), dtype=np.int64).astype(np.uint8)),
    }
    records = []
    for family in FAMILIES:
        fam = enumerate_family(family, seed if family in SAMPLED_FAMILIES else None)
        for tid in fam:
            for channels, img in images.items():
                out = apply(tid, img)
                records.append({
                    "transform_id": tid.canonical_id,
                    "height": size,
                    "width": size,
                    "channels": channels,
                    "image_b64": base64.b64encode(img.data).decode("ascii"),
                    "output_b64": base64.b64encode(out.data).decode("ascii"),
                })
    return records


def write_golden(path, seed: int = GOLDEN_SEED, size: int = GOLDEN_SIZE) -> int:
    records = golden_records(seed, size)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return len(records)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="emit golden transform vectors")
    parser.add_argument("output", help="output NDJSON path")
    parser.add_argument("--seed", type=int, default=GOLDEN_SEED)
    parser.add_argument("--size", type=int, default=GOLDEN_SIZE)
    args = parser.parse_args(argv)
    n = write_golden(args.output, args.seed, args.size)
    print(f"wrote {n} golden vectors to {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
