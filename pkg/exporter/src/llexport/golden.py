"""Golden-vector conformance: replay the shared vectors through this
package's transforms and demand byte equality before exporting anything."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .transforms import SAMPLED, apply_transform, enumerate_members


class GoldenMismatch(Exception):
    pass


def load_golden(path):
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    if not records:
        raise GoldenMismatch(f"golden file {path} is empty")
    return records


def verify_golden(path) -> int:
    """Raises GoldenMismatch on the first disagreement; returns #vectors."""
    records = load_golden(path)
    descriptors = {}
    for rec in records:
        tid = rec["transform_id"]
        family = tid.split("/")[0]
        if family not in descriptors:
            seed = int(tid.split("/")[1]) if family in SAMPLED else None
            descriptors[family] = dict(enumerate_members(family, seed))
        if tid not in descriptors[family]:
            raise GoldenMismatch(f"{tid}: not produced by this implementation's "
                                 f"family enumeration")
        shape = (rec["height"], rec["width"], rec["channels"])
        img = np.frombuffer(base64.b64decode(rec["image_b64"]), dtype=np.uint8)
        img = img.reshape(shape)
        expected = base64.b64decode(rec["output_b64"])
        got = np.ascontiguousarray(
            apply_transform(tid, img, descriptor=descriptors[family][tid])).tobytes()
        if got != expected:
            raise GoldenMismatch(f"{tid}: transform output differs from the golden vector")
    return len(records)
