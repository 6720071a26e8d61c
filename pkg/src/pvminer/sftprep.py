"""Supervised-fine-tuning data preparation.

Turns gold records into (query, completion, boundary) training pairs and
exports them as a line-delimited manifest. The boundary is a character
offset: the completion starts exactly there in ``query + completion``,
which is all a tokenizer-specific trainer needs to derive its token-level
loss mask.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Annotation, GoldRecord
from .parse import STOP_STRING
from .prompt import build_sft_query

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TrainPair:
    id: str
    query: str
    completion: str
    boundary: int

    def __post_init__(self):
        if self.boundary != len(self.query):
            raise ValueError("boundary must equal the query length")


def serialize_annotations(annotations: Sequence[Annotation]) -> str:
    """Canonical completion text for an annotation set.

    Single line, keys in Code/Sub-code/Span order, items sorted by span
    start then Code name. Injective on canonical annotation sets and the
    empty set serializes to ``{"results": []}``.
    """
    ordered = sorted(annotations, key=lambda a: (a.span.start, a.code, a.subcode))
    doc = {
        "results": [
            {"Code": a.code, "Sub-code": a.subcode, "Span": a.span.text}
            for a in ordered
        ]
    }
    return json.dumps(doc, ensure_ascii=False)


def build_pairs(
    records: Sequence[GoldRecord],
    instruction: str,
    include_stop: bool = False,
) -> list[TrainPair]:
    """Build one training pair per record.

    ``include_stop`` appends the generation stop string to the target so
    fine-tuned models learn to emit it.
    """
    pairs = []
    for record in records:
        query = build_sft_query(instruction, record.message)
        completion = serialize_annotations(record.annotations)
        if include_stop:
            completion = f"{completion} {STOP_STRING}"
        pairs.append(
            TrainPair(id=record.id, query=query, completion=completion,
                      boundary=len(query))
        )
    return pairs


def manifest_header(seed: int | None = None, config: dict | None = None) -> dict:
    from . import __version__

    header: dict = {"manifest_version": MANIFEST_VERSION, "tool_version": __version__}
    if seed is not None:
        header["seed"] = seed
    if config is not None:
        blob = json.dumps(config, sort_keys=True).encode("utf-8")
        header["config_hash"] = hashlib.sha256(blob).hexdigest()[:16]
    return header


def export_manifest(
    pairs: Iterable[TrainPair],
    path: str | Path,
    seed: int | None = None,
    config: dict | None = None,
) -> None:
    """Write a manifest: one header line, then one pair per line in id order.

    Byte-stable for a fixed pair set, so re-exports of an unchanged corpus
    hash identically.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest_header(seed, config), ensure_ascii=False) + "\n")
        for pair in sorted(pairs, key=lambda p: p.id):
            doc = {
                "id": pair.id,
                "query": pair.query,
                "completion": pair.completion,
                "boundary": pair.boundary,
            }
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


def read_manifest(path: str | Path) -> list[TrainPair]:
    """Read a manifest back, checking the header version."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = json.loads(lines[0])
    if header.get("manifest_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version: {header.get('manifest_version')!r}")
    return [
        TrainPair(
            id=doc["id"], query=doc["query"],
            completion=doc["completion"], boundary=doc["boundary"],
        )
        for doc in map(json.loads, lines[1:])
        if doc
    ]
