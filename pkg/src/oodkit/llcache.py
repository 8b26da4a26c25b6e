"""The "llcache/1" interchange format.

Newline-delimited JSON, UTF-8. The first line is the header object
({"format": "llcache/1", "model_id", "dataset_id", "log_base": "e",
"transform_ids": [...]}); every following line is a record
({"sample_id", "transform_id", "loglik"}) with loglik a finite float in
nats. This file format is the only contract between the toolkit and
external likelihood exporters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CacheCompletenessError,
    CacheJoinError,
    CacheParseError,
    CacheValueError,
    CacheVersionError,
    ValidationError,
)

FORMAT = "llcache/1"


@dataclass(frozen=True)
class CacheHeader:
    model_id: str
    dataset_id: str
    transform_ids: tuple[str, ...]
    format: str = FORMAT
    log_base: str = "e"

    def __post_init__(self):
        if self.format != FORMAT:
            raise CacheVersionError(f"unsupported cache format {self.format!r}")
        if self.log_base != "e":
            raise ValidationError("loglik values must be natural-log")
        if not self.transform_ids or "identity" not in self.transform_ids:
            raise ValidationError('transform_ids must be non-empty and include "identity"')
        object.__setattr__(self, "transform_ids", tuple(self.transform_ids))


@dataclass(frozen=True)
class CacheRecord:
    sample_id: str
    transform_id: str
    loglik: float

    def __post_init__(self):
        if not math.isfinite(self.loglik):
            raise CacheValueError(f"loglik must be finite, got {self.loglik!r}")


def write_cache(header: CacheHeader, records, sink) -> None:
    """Validate everything first, then emit; nothing is written on error."""
    records = list(records)
    allowed = set(header.transform_ids)
    for rec in records:
        if rec.transform_id not in allowed:
            raise ValidationError(
                f"record transform_id {rec.transform_id!r} not listed in the header")
    lines = [json.dumps({
        "format": header.format,
        "model_id": header.model_id,
        "dataset_id": header.dataset_id,
        "log_base": header.log_base,
        "transform_ids": list(header.transform_ids),
    })]
    lines.extend(json.dumps({"sample_id": r.sample_id, "transform_id": r.transform_id,
                             "loglik": r.loglik}) for r in records)
    payload = "\n".join(lines) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(payload, encoding="utf-8")
    else:
        sink.write(payload)


def _reject_constant(token):
    raise CacheValueError(f"non-finite loglik token {token!r}")


def read_cache(source) -> tuple[CacheHeader, list[CacheRecord]]:
    """Strict parse preserving record order; errors carry line numbers."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines:
        raise CacheParseError(1, "empty cache file")
    try:
        head = json.loads(lines[0], parse_constant=_reject_constant)
    except CacheValueError:
        raise
    except json.JSONDecodeError as exc:
        raise CacheParseError(1, f"bad header JSON: {exc}") from exc
    if not isinstance(head, dict) or "format" not in head:
        raise CacheParseError(1, "header must be a JSON object with a format field")
    if head["format"] != FORMAT:
        raise CacheVersionError(f"unsupported cache format {head['format']!r}")
    try:
        header = CacheHeader(model_id=head["model_id"], dataset_id=head["dataset_id"],
                             transform_ids=tuple(head["transform_ids"]),
                             log_base=head.get("log_base", "e"))
    except KeyError as exc:
        raise CacheParseError(1, f"header missing field {exc}") from exc
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line, parse_constant=_reject_constant)
        except CacheValueError:
            raise
        except json.JSONDecodeError as exc:
            raise CacheParseError(i, f"bad record JSON: {exc}") from exc
        try:
            rec = CacheRecord(sample_id=str(obj["sample_id"]),
                              transform_id=str(obj["transform_id"]),
                              loglik=float(obj["loglik"]))
        except KeyError as exc:
            raise CacheParseError(i, f"record missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise CacheParseError(i, f"bad record value: {exc}") from exc
        if rec.transform_id not in header.transform_ids:
            raise CacheParseError(i, f"transform_id {rec.transform_id!r} not in header")
        records.append(rec)
    return header, records


def join(caches, required) -> dict[str, dict[str, float]]:
    """Merge caches into sample_id -> (transform_id -> loglik) covering exactly
    {"identity"} plus the required family's ids.

    `required` is a TransformFamily (or anything with .transform_ids).
    All caches must agree on dataset_id and model_id.
    """
    caches = list(caches)
    if not caches:
        raise ValidationError("no caches to join")
    model_id = caches[0][0].model_id
    dataset_id = caches[0][0].dataset_id
    for header, _ in caches:
        if header.model_id != model_id or header.dataset_id != dataset_id:
            raise CacheJoinError(
                f"cannot join caches for ({header.model_id!r}, {header.dataset_id!r}) "
                f"with ({model_id!r}, {dataset_id!r})")
    needed = ["identity"] + [t for t in required.transform_ids if t != "identity"]
    needed_set = set(needed)
    table: dict[str, dict[str, float]] = {}
    for _, records in caches:
        for rec in records:
            if rec.transform_id in needed_set:
                table.setdefault(rec.sample_id, {})[rec.transform_id] = rec.loglik
    missing = [(sid, tid) for sid, row in sorted(table.items())
               for tid in needed if tid not in row]
    if missing:
        raise CacheCompletenessError(missing)
    return table
