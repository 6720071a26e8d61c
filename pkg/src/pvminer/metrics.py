"""Evaluation suite: multi-label micro P/R/F1, relaxed span matching,
per-class breakdowns, and label-swap analysis.

Code and Sub-code prediction are scored as multi-label classification
with micro-averaged counts; evidence spans are scored with token-set
Jaccard overlap at a configurable threshold (default 0.6). All
aggregation is pure and order-independent.
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .codebook import Codebook
from .corpus import Annotation, GoldRecord
from .parse import Outcome, ParseReport


class Level(enum.Enum):
    CODE = "Code"
    SUBCODE = "Subcode"


class MissingPrediction(KeyError):
    def __init__(self, record_id: str):
        super().__init__(record_id)
        self.record_id = record_id


@dataclass(frozen=True)
class PRF:
    """Micro precision/recall/F1 with raw counts.

    0/0 precision or recall is reported as 0.0 with ``degenerate`` set,
    so tables never contain non-numeric cells.
    """

    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) > 0 else 0.0

    @property
    def degenerate(self) -> bool:
        return (self.tp + self.fp) == 0 or (self.tp + self.fn) == 0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class EvalInstance:
    """Gold and predicted annotation sets for one message."""

    id: str
    gold: tuple[Annotation, ...]
    pred: tuple[Annotation, ...]

    def labels(self, level: Level, predicted: bool) -> frozenset[str]:
        anns = self.pred if predicted else self.gold
        if level is Level.CODE:
            return frozenset(a.code for a in anns)
        return frozenset(a.subcode for a in anns)

    def span_texts(self, predicted: bool) -> tuple[str, ...]:
        anns = self.pred if predicted else self.gold
        # Deduplicate identical span texts; matching is text-based.
        seen: dict[str, None] = {}
        for a in anns:
            seen.setdefault(a.span.text)
        return tuple(seen)


class SpanTokenizer:
    """Fixed policy: case-fold, split on Unicode whitespace, strip edge
    punctuation per token, drop empties, compare as a token set."""

    def tokenize(self, text: str) -> frozenset[str]:
        tokens = []
        for raw in text.casefold().split():
            token = self._strip_edges(raw)
            if token:
                tokens.append(token)
        return frozenset(tokens)

    @staticmethod
    def _strip_edges(token: str) -> str:
        start, end = 0, len(token)
        while start < end and unicodedata.category(token[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(token[end - 1]).startswith("P"):
            end -= 1
        return token[start:end]


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def label_prf(instances: Sequence[EvalInstance], level: Level) -> PRF:
    """Micro P/R/F1 over per-instance label sets."""
    tp = fp = fn = 0
    for inst in instances:
        gold = inst.labels(level, predicted=False)
        pred = inst.labels(level, predicted=True)
        tp += len(gold & pred)
        fp += len(pred - gold)
        fn += len(gold - pred)
    return PRF(tp, fp, fn)


def span_match(
    pred_spans: Sequence[str],
    ref_spans: Sequence[str],
    tokenizer: SpanTokenizer | None = None,
    threshold: float = 0.6,
    one_to_one: bool = False,
) -> tuple[int, int, int, list[tuple[int, int, float]]]:
    """Match predicted to reference spans by token-set Jaccard.

    Default matching is many-to-one: a prediction is a true positive when
    it aligns with at least one reference, and a reference counts as
    covered when at least one prediction aligns with it. ``one_to_one``
    switches to optimal bipartite assignment for sensitivity analysis.
    Returns (tp, fp, fn, matches) where matches are (pred index, ref
    index, score) pairs.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    tok = tokenizer or SpanTokenizer()
    pred_tok = [tok.tokenize(s) for s in pred_spans]
    ref_tok = [tok.tokenize(s) for s in ref_spans]
    scores = [
        [jaccard(p, r) for r in ref_tok]
        for p in pred_tok
    ]
    matches: list[tuple[int, int, float]] = []
    if one_to_one:
        matches = _assign_one_to_one(scores, threshold)
        tp = len(matches)
        fp = len(pred_spans) - tp
        fn = len(ref_spans) - tp
        return tp, fp, fn, matches
    covered_refs: set[int] = set()
    tp = 0
    for pi, row in enumerate(scores):
        best = [(ri, s) for ri, s in enumerate(row) if s >= threshold]
        if best:
            tp += 1
            for ri, s in best:
                covered_refs.add(ri)
                matches.append((pi, ri, s))
    fp = len(pred_spans) - tp
    fn = len(ref_spans) - len(covered_refs)
    return tp, fp, fn, matches


def _assign_one_to_one(scores, threshold: float):
    if not scores or not scores[0]:
        return []
    import numpy as np
    from scipy.optimize import linear_sum_assignment

    cost = -np.array(scores)
    rows, cols = linear_sum_assignment(cost)
    return [
        (int(pi), int(ri), scores[pi][ri])
        for pi, ri in zip(rows, cols)
        if scores[pi][ri] >= threshold
    ]


def span_prf(
    instances: Sequence[EvalInstance],
    tokenizer: SpanTokenizer | None = None,
    threshold: float = 0.6,
    one_to_one: bool = False,
) -> PRF:
    """Micro span P/R/F1 pooled across instances."""
    total = PRF(0, 0, 0)
    for inst in instances:
        tp, fp, fn, _ = span_match(
            inst.span_texts(predicted=True),
            inst.span_texts(predicted=False),
            tokenizer,
            threshold,
            one_to_one,
        )
        total = total + PRF(tp, fp, fn)
    return total


def per_class_prf(instances: Sequence[EvalInstance], level: Level) -> dict[str, PRF]:
    """Per-class micro counts; classes absent from both gold and pred are omitted."""
    counts: dict[str, list[int]] = {}
    for inst in instances:
        gold = inst.labels(level, predicted=False)
        pred = inst.labels(level, predicted=True)
        for label in gold | pred:
            c = counts.setdefault(label, [0, 0, 0])
            if label in gold and label in pred:
                c[0] += 1
            elif label in pred:
                c[1] += 1
            else:
                c[2] += 1
    return {label: PRF(*c) for label, c in sorted(counts.items())}


def swap_counts(instances: Sequence[EvalInstance], level: Level) -> dict[tuple[str, str], int]:
    """Count (gold label -> predicted label) residue pairs per instance.

    For each instance, every label in gold-but-not-pred crossed with every
    label in pred-but-not-gold counts one swap; self-pairs are excluded.
    """
    out: dict[tuple[str, str], int] = {}
    for inst in instances:
        gold = inst.labels(level, predicted=False)
        pred = inst.labels(level, predicted=True)
        for g in sorted(gold - pred):
            for p in sorted(pred - gold):
                if g != p:
                    out[(g, p)] = out.get((g, p), 0) + 1
    return out


@dataclass(frozen=True)
class EvalReport:
    code: PRF
    subcode: PRF
    span: PRF
    per_class_code: Mapping[str, PRF]
    per_class_subcode: Mapping[str, PRF]
    swaps_code: Mapping[tuple[str, str], int]
    swaps_subcode: Mapping[tuple[str, str], int]
    instance_count: int = 0

    def to_dict(self) -> dict:
        def prf_dict(prf: PRF) -> dict:
            return {
                "precision": prf.precision,
                "recall": prf.recall,
                "f1": prf.f1,
                "tp": prf.tp,
                "fp": prf.fp,
                "fn": prf.fn,
                "degenerate": prf.degenerate,
            }

        return {
            "instance_count": self.instance_count,
            "code": prf_dict(self.code),
            "subcode": prf_dict(self.subcode),
            "span": prf_dict(self.span),
            "per_class_code": {k: prf_dict(v) for k, v in self.per_class_code.items()},
            "per_class_subcode": {k: prf_dict(v) for k, v in self.per_class_subcode.items()},
            "swaps_code": [
                {"gold": g, "pred": p, "count": c}
                for (g, p), c in sorted(self.swaps_code.items())
            ],
            "swaps_subcode": [
                {"gold": g, "pred": p, "count": c}
                for (g, p), c in sorted(self.swaps_subcode.items())
            ],
        }


def build_instances(
    records: Sequence[GoldRecord],
    reports: Mapping[str, ParseReport],
    strict_alignment: bool = False,
) -> list[EvalInstance]:
    """Align parse reports to gold records by id.

    Failed parses and (unless ``strict_alignment``) missing reports
    contribute empty prediction sets.
    """
    instances = []
    for record in records:
        report = reports.get(record.id)
        if report is None:
            if strict_alignment:
                raise MissingPrediction(record.id)
            pred: tuple[Annotation, ...] = ()
        elif report.outcome is Outcome.FAILED:
            pred = ()
        else:
            pred = report.annotations
        instances.append(EvalInstance(id=record.id, gold=record.annotations, pred=pred))
    return instances


def evaluate(
    records: Sequence[GoldRecord],
    reports: Mapping[str, ParseReport],
    cb: Codebook | None = None,
    threshold: float = 0.6,
    one_to_one: bool = False,
    strict_alignment: bool = False,
) -> EvalReport:
    """Compose the full evaluation over aligned gold/prediction pairs."""
    instances = build_instances(records, reports, strict_alignment)
    return evaluate_instances(instances, threshold=threshold, one_to_one=one_to_one)


def evaluate_instances(
    instances: Sequence[EvalInstance],
    threshold: float = 0.6,
    one_to_one: bool = False,
) -> EvalReport:
    return EvalReport(
        code=label_prf(instances, Level.CODE),
        subcode=label_prf(instances, Level.SUBCODE),
        span=span_prf(instances, threshold=threshold, one_to_one=one_to_one),
        per_class_code=per_class_prf(instances, Level.CODE),
        per_class_subcode=per_class_prf(instances, Level.SUBCODE),
        swaps_code=swap_counts(instances, Level.CODE),
        swaps_subcode=swap_counts(instances, Level.SUBCODE),
        instance_count=len(instances),
    )


def pct(x: float) -> str:
    """Render a fraction as a percentage with two decimals."""
    return f"{x * 100:.2f}"


def format_prf_row(label: str, prf: PRF, width: int = 40) -> str:
    return f"{label:<{width}} {pct(prf.precision):>7} {pct(prf.recall):>7} {pct(prf.f1):>7}"


def format_report(report: EvalReport) -> str:
    """Text tables in the percentage layout (P/R/F1 to two decimals)."""
    lines = []
    lines.append(f"Instances: {report.instance_count}")
    lines.append("")
    lines.append(f"{'Level':<40} {'P':>7} {'R':>7} {'F1':>7}")
    lines.append("-" * 64)
    lines.append(format_prf_row("Code", report.code))
    lines.append(format_prf_row("Sub-code", report.subcode))
    lines.append(format_prf_row("Span", report.span))
    for title, table in (
        ("Per-class Code", report.per_class_code),
        ("Per-class Sub-code", report.per_class_subcode),
    ):
        lines.append("")
        lines.append(f"{title:<40} {'P':>7} {'R':>7} {'F1':>7}")
        lines.append("-" * 64)
        for label, prf in table.items():
            lines.append(format_prf_row(label, prf))
    for title, swaps in (
        ("Code swaps (gold -> pred)", report.swaps_code),
        ("Sub-code swaps (gold -> pred)", report.swaps_subcode),
    ):
        lines.append("")
        lines.append(title)
        lines.append("-" * 64)
        if not swaps:
            lines.append("(none)")
        for (g, p), c in sorted(swaps.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"{g} -> {p}: {c}")
    return "\n".join(lines) + "\n"
