"""Message/annotation data model, corpus file I/O, splitting, and synthesis.

Corpus files are UTF-8 JSON lines, one record per line:

    {"id": ..., "text": ..., "to_pat_yn": "Y"|"N",
     "annotations": [{"code", "subcode", "span_text", "start", "end"}, ...]}

All types are immutable after construction; splitting and synthesis are
pure functions of their seed.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .codebook import DIRECTIONS, NO_SUBCODE, Codebook


class CorpusError(ValueError):
    """Base class for corpus reading/validation failures."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class IoFailure(CorpusError):
    pass


class RecordParseError(CorpusError):
    pass


class InvalidPair(CorpusError):
    def __init__(self, line: int | None, code: str, subcode: str):
        super().__init__(f"invalid pair ({code!r}, {subcode!r})", line)
        self.code = code
        self.subcode = subcode


class UngroundedSpan(CorpusError):
    pass


class DirectionMismatch(CorpusError):
    def __init__(self, line: int | None, code: str, direction: str):
        super().__init__(f"Code {code!r} inconsistent with direction {direction!r}", line)
        self.code = code
        self.direction = direction


class BadRatios(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class InvalidProfile(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    id: str
    text: str
    direction: str
    source: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("message text must be non-empty")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    text: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span offsets [{self.start}, {self.end})")

    def grounds_in(self, text: str) -> bool:
        """True iff this span is byte-exact at its offsets in ``text``."""
        return self.end <= len(text) and text[self.start:self.end] == self.text


@dataclass(frozen=True)
class Annotation:
    code: str
    subcode: str
    span: Span

    @property
    def pair(self) -> tuple[str, str]:
        return (self.code, self.subcode)

    def key(self) -> tuple[str, str, int, int, str]:
        return (self.code, self.subcode, self.span.start, self.span.end, self.span.text)


@dataclass(frozen=True)
class GoldRecord:
    message: Message
    annotations: tuple[Annotation, ...] = ()

    @property
    def id(self) -> str:
        return self.message.id

    def labels(self) -> frozenset[tuple[str, str]]:
        """The (Code, Sub-code) pair set carried by this record."""
        return frozenset(a.pair for a in self.annotations)


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint, exhaustive partition of record ids into named folds."""

    folds: Mapping[str, tuple[str, ...]]
    ratios: Mapping[str, float]
    seed: int

    def fold_of(self, record_id: str) -> str:
        for name, ids in self.folds.items():
            if record_id in ids:
                return name
        raise KeyError(record_id)


def validate_record(
    record: GoldRecord,
    cb: Codebook,
    strict: bool = False,
    line: int | None = None,
) -> list[CorpusError]:
    """Check one record against the codebook; returns warnings, raises on fatals.

    Direction inconsistency is a warning unless ``strict``.
    """
    warnings: list[CorpusError] = []
    seen: set[tuple] = set()
    for ann in record.annotations:
        if not cb.is_valid_pair(ann.code, ann.subcode):
            raise InvalidPair(line, ann.code, ann.subcode)
        if not ann.span.grounds_in(record.message.text):
            raise UngroundedSpan(
                f"span {ann.span.text!r} not at [{ann.span.start}, {ann.span.end}) "
                f"of message {record.message.id!r}",
                line,
            )
        if ann.key() in seen:
            raise RecordParseError(f"duplicate annotation tuple {ann.key()!r}", line)
        seen.add(ann.key())
        if not cb.is_direction_consistent(ann.code, record.message.direction):
            err = DirectionMismatch(line, ann.code, record.message.direction)
            if strict:
                raise err
            warnings.append(err)
    return warnings


def record_to_dict(record: GoldRecord) -> dict:
    doc = {
        "id": record.message.id,
        "text": record.message.text,
        "to_pat_yn": record.message.direction,
        "annotations": [
            {
                "code": a.code,
                "subcode": a.subcode,
                "span_text": a.span.text,
                "start": a.span.start,
                "end": a.span.end,
            }
            for a in record.annotations
        ],
    }
    if record.message.source is not None:
        doc["source"] = record.message.source
    return doc


def record_from_dict(doc: dict, line: int | None = None) -> GoldRecord:
    try:
        message = Message(
            id=str(doc["id"]),
            text=doc["text"],
            direction=doc["to_pat_yn"],
            source=doc.get("source"),
        )
        annotations = tuple(
            Annotation(
                code=a["code"],
                subcode=a["subcode"],
                span=Span(start=a["start"], end=a["end"], text=a["span_text"]),
            )
            for a in doc.get("annotations", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordParseError(f"malformed record: {exc}", line) from exc
    return GoldRecord(message=message, annotations=annotations)


def read_corpus(
    path: str | Path,
    cb: Codebook,
    strict: bool = False,
    warnings_out: list[CorpusError] | None = None,
) -> list[GoldRecord]:
    """Read and validate a JSONL corpus file.

    Fatal issues raise with the offending line number attached; direction
    mismatches are appended to ``warnings_out`` unless ``strict``.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    records: list[GoldRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise RecordParseError(f"not valid JSON: {exc}", lineno) from exc
        record = record_from_dict(doc, line=lineno)
        warnings = validate_record(record, cb, strict=strict, line=lineno)
        if warnings_out is not None:
            warnings_out.extend(warnings)
        records.append(record)
    return records


def write_corpus(records: Iterable[GoldRecord], path: str | Path) -> None:
    """Write records as JSON lines; byte-stable for a fixed record list."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")


def stratified_split(
    records: Sequence[GoldRecord],
    ratios: Mapping[str, float],
    seed: int = 0,
) -> SplitAssignment:
    """Multi-label iterative stratification over (Code, Sub-code) pair labels.

    Greedy scheme: repeatedly take the label with the fewest unassigned
    examples and place each of its examples into the fold with the
    greatest remaining desire for that label, breaking ties by largest
    remaining fold capacity, then by seeded randomness. Unlabeled
    examples are distributed by remaining capacity at the end.
    """
    if not records:
        raise EmptyCorpus("cannot split an empty corpus")
    total = sum(ratios.values())
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise BadRatios(f"ratios sum to {total}, expected 1")
    if any(r < 0 for r in ratios.values()):
        raise BadRatios("ratios must be non-negative")

    rng = random.Random(seed)
    fold_names = list(ratios)
    remaining = {r.id: r for r in records}
    if len(remaining) != len(records):
        raise ValueError("duplicate record ids")

    # Desired number of examples per fold, and per (label, fold).
    capacity = {f: len(records) * ratios[f] for f in fold_names}
    label_ids: dict[tuple[str, str], set[str]] = {}
    for r in records:
        for lab in r.labels():
            label_ids.setdefault(lab, set()).add(r.id)
    desire = {
        lab: {f: len(ids) * ratios[f] for f in fold_names}
        for lab, ids in label_ids.items()
    }

    assignment: dict[str, list[str]] = {f: [] for f in fold_names}

    def place(rid: str, fold: str) -> None:
        assignment[fold].append(rid)
        capacity[fold] -= 1
        for lab in remaining[rid].labels():
            desire[lab][fold] -= 1
        del remaining[rid]

    while True:
        active = {
            lab: ids & remaining.keys() for lab, ids in label_ids.items()
        }
        active = {lab: ids for lab, ids in active.items() if ids}
        if not active:
            break
        # Rarest label first; ties broken deterministically by name.
        lab = min(active, key=lambda l: (len(active[l]), l))
        for rid in sorted(active[lab]):
            candidates = fold_names
            best_desire = max(desire[lab][f] for f in candidates)
            candidates = [f for f in candidates if desire[lab][f] == best_desire]
            if len(candidates) > 1:
                best_cap = max(capacity[f] for f in candidates)
                candidates = [f for f in candidates if capacity[f] == best_cap]
            place(rid, rng.choice(candidates))

    for rid in sorted(remaining.keys()):
        best_cap = max(capacity.values())
        candidates = [f for f in fold_names if capacity[f] == best_cap]
        place(rid, rng.choice(candidates))

    return SplitAssignment(
        folds={f: tuple(sorted(ids)) for f, ids in assignment.items()},
        ratios=dict(ratios),
        seed=seed,
    )


# Sentence templates for synthetic corpus generation. Each valid
# (Code, Sub-code) pair gets a deterministic evidence phrase; messages are
# assembled so the phrase appears verbatim and its offsets are known.
_LEAD_INS = (
    "Quick note before my visit.",
    "Following up on our last exchange.",
    "Writing about the plan we discussed.",
    "One more thing for the record.",
)


def _phrase_for(pair: tuple[str, str]) -> str:
    # Unique per (Code, Sub-code) so spans ground unambiguously.
    def words(tag: str) -> str:
        cleaned = "".join(ch if ch.isalnum() else " " for ch in tag).split()
        return " ".join(cleaned).lower() or "general"

    code, subcode = pair
    if subcode == NO_SUBCODE:
        return f"this concerns {words(code)} matters"
    return f"this concerns {words(subcode)} under {words(code)}"


def synthesize_corpus(
    cb: Codebook,
    profile: Mapping[tuple[str, str], float],
    n: int,
    seed: int = 0,
    max_pairs_per_message: int = 3,
) -> list[GoldRecord]:
    """Generate ``n`` gold records with known spans from a pair-weight profile.

    Deterministic for a fixed seed; empirical pair frequencies converge to
    the normalized profile as ``n`` grows. Every output record passes
    strict corpus validation against ``cb``.
    """
    if n <= 0:
        raise InvalidProfile("n must be positive")
    if not profile:
        raise InvalidProfile("profile must weight at least one pair")
    pairs = list(profile)
    weights = []
    for pair in pairs:
        w = profile[pair]
        if w < 0:
            raise InvalidProfile(f"negative weight for {pair!r}")
        if not cb.is_valid_pair(*pair):
            raise InvalidProfile(f"pair {pair!r} is not valid under the codebook")
        weights.append(float(w))
    if sum(weights) <= 0:
        raise InvalidProfile("profile weights sum to zero")

    rng = random.Random(seed)
    records = []
    for i in range(n):
        k = rng.randint(1, max_pairs_per_message)
        chosen: list[tuple[str, str]] = []
        for pair in rng.choices(pairs, weights=weights, k=k):
            if pair not in chosen:
                chosen.append(pair)
        # A record's direction must be admissible for every chosen Code.
        allowed = frozenset(DIRECTIONS)
        kept: list[tuple[str, str]] = []
        for pair in chosen:
            rule = cb.direction_rules[pair[0]]
            if allowed & rule:
                allowed &= rule
                kept.append(pair)
        direction = sorted(allowed)[rng.randrange(len(allowed))] if len(allowed) > 1 else next(iter(allowed))

        text = _LEAD_INS[rng.randrange(len(_LEAD_INS))]
        annotations = []
        for pair in kept:
            phrase = _phrase_for(pair)
            start = len(text) + 1
            text = f"{text} {phrase}."
            annotations.append(
                Annotation(code=pair[0], subcode=pair[1],
                           span=Span(start=start, end=start + len(phrase), text=phrase))
            )
        message = Message(id=f"syn-{seed:04d}-{i:06d}", text=text,
                          direction=direction, source="synthetic")
        records.append(GoldRecord(message=message, annotations=tuple(annotations)))
    return records


def long_tail_profile(cb: Codebook, exponent: float = 1.0) -> dict[tuple[str, str], float]:
    """Zipf-shaped weight profile over all valid pairs, in declaration order."""
    pairs = cb.valid_pairs()
    return {pair: 1.0 / (rank + 1) ** exponent for rank, pair in enumerate(pairs)}


def select_exemplar_records(
    records: Sequence[GoldRecord],
    k: int,
    seed: int = 0,
) -> list[GoldRecord]:
    """Pick ``k`` label-diverse records: greedy new-label coverage, seeded ties."""
    if k <= 0:
        return []
    rng = random.Random(seed)
    pool = list(records)
    rng.shuffle(pool)
    chosen: list[GoldRecord] = []
    covered: set[tuple[str, str]] = set()
    while pool and len(chosen) < k:
        best = max(pool, key=lambda r: (len(r.labels() - covered), r.id))
        chosen.append(best)
        covered |= best.labels()
        pool.remove(best)
    return chosen


@dataclass(frozen=True)
class CorpusStats:
    message_count: int
    direction_counts: Mapping[str, int]
    token_count: int
    mean_length: float
    sd_length: float
    max_length: int


def corpus_stats(records: Sequence[GoldRecord]) -> CorpusStats:
    """Whitespace word-count summary of a record list."""
    lengths = [len(r.message.text.split()) for r in records]
    directions = {d: 0 for d in DIRECTIONS}
    for r in records:
        directions[r.message.direction] += 1
    if not lengths:
        return CorpusStats(0, directions, 0, 0.0, 0.0, 0)
    mean = sum(lengths) / len(lengths)
    var = sum((x - mean) ** 2 for x in lengths) / len(lengths)
    return CorpusStats(
        message_count=len(records),
        direction_counts=directions,
        token_count=sum(lengths),
        mean_length=mean,
        sd_length=math.sqrt(var),
        max_length=max(lengths),
    )
