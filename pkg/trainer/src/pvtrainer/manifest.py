"""Reader for the SFT manifest interchange format.

A manifest is JSONL: a header line carrying ``manifest_version``, then one
pair per line with ``id``, ``query``, ``completion``, and ``boundary``
(the character offset in ``query + completion`` where the loss mask turns
on; always ``len(query)``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SUPPORTED_VERSIONS = (1,)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class TrainPair:
    id: str
    query: str
    completion: str
    boundary: int

    def __post_init__(self):
        if self.boundary != len(self.query):
            raise ManifestError(
                f"pair {self.id!r}: boundary {self.boundary} != query length "
                f"{len(self.query)}"
            )
        if not self.completion:
            raise ManifestError(f"pair {self.id!r}: empty completion")

    @property
    def text(self) -> str:
        return self.query + self.completion


def read_manifest(path: str | Path) -> list[TrainPair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ManifestError("empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"bad header line: {exc}") from exc
    version = header.get("manifest_version")
    if version not in SUPPORTED_VERSIONS:
        raise ManifestError(f"unsupported manifest version: {version!r}")
    pairs = []
    for lineno, raw in enumerate(lines[1:], 2):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
            pairs.append(
                TrainPair(id=str(doc["id"]), query=doc["query"],
                          completion=doc["completion"], boundary=doc["boundary"])
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
    if not pairs:
        raise ManifestError("manifest contains no pairs")
    return pairs
