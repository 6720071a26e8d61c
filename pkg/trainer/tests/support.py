"""Synthetic manifest helpers shared by the trainer tests."""

from __future__ import annotations

import json

from pvtrainer.manifest import TrainPair

CODES = ["SDOH", "PartnershipPatient", "CareCoordinationPatient"]


def make_pairs(n: int) -> list[TrainPair]:
    """Small synthetic pairs in the manifest shape; spans quote the text."""
    pairs = []
    for i in range(n):
        code = CODES[i % len(CODES)]
        text = f"note {i}: please review my chart"
        query = f"Annotate the message.\n{text}\nN"
        completion = json.dumps(
            {"results": [{"Code": code, "Sub-code": "None", "Span": text}]}
        )
        pairs.append(TrainPair(id=f"p{i:03d}", query=query,
                               completion=completion, boundary=len(query)))
    return pairs


def write_manifest(path, pairs):
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"manifest_version": 1, "tool_version": "test"}) + "\n")
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "query": p.query,
                                 "completion": p.completion,
                                 "boundary": p.boundary}) + "\n")
