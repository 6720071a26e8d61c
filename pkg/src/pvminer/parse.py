"""Extraction and validation of structured results from raw completions.

Accepts the wire shape ``{"results": [{"Code": ..., "Sub-code": ...,
"Span": ...}]}`` and never raises on arbitrary input: every failure is
encoded in a :class:`ParseReport`. Under the lenient policy, items (not
whole completions) are the unit of failure, so one bad tuple does not
discard its siblings.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Mapping

from .codebook import Codebook
from .corpus import Annotation, Message, Span

STOP_STRING = "JSON_END"

# Documented label aliases applied before byte-exact lookup. The canonical
# Sub-code spelling "inviteCollabration" is what the default codebook
# declares; "inviteCollaboration" is the common corrected spelling.
DEFAULT_ALIASES: Mapping[str, str] = {
    "inviteCollaboration": "inviteCollabration",
    "Salutation": "salutation",
    "Signoff": "signoff",
}

_FENCE_RE = re.compile(r"```(?:json)?|```", re.IGNORECASE)


class IssueKind(enum.Enum):
    NON_PARSEABLE = "NonParseable"
    EXTRA_PROSE = "ExtraProse"
    TRUNCATED = "Truncated"
    UNKNOWN_CODE = "UnknownCode"
    UNKNOWN_SUBCODE = "UnknownSubcode"
    INVALID_PAIR = "InvalidPair"
    DIRECTION_MISMATCH = "DirectionMismatch"
    HALLUCINATED_SPAN = "HallucinatedSpan"
    SPAN_NORMALIZED = "SpanNormalized"
    DUPLICATE_TUPLE = "DuplicateTuple"
    UNKNOWN_FIELD = "UnknownField"
    MISSING_FIELD = "MissingField"


class Severity(enum.Enum):
    FATAL = "Fatal"
    REPAIRABLE = "Repairable"
    WARNING = "Warning"


class Outcome(enum.Enum):
    VALID = "Valid"
    REPAIRED = "Repaired"
    FAILED = "Failed"


class FailureLabel(enum.Enum):
    FORMAT_DRIFT = "FormatDrift"
    LABEL_CONFUSION = "LabelConfusion"
    SPAN_NOISE = "SpanNoise"
    DIRECTION_ERROR = "DirectionError"


class Policy(enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


# kind -> severity, per policy. Lenient downgrades direction and span
# normalization to warnings and drops invalid items instead of failing.
_SEVERITY: dict[Policy, dict[IssueKind, Severity]] = {
    Policy.LENIENT: {
        IssueKind.NON_PARSEABLE: Severity.FATAL,
        IssueKind.TRUNCATED: Severity.FATAL,
        IssueKind.EXTRA_PROSE: Severity.WARNING,
        IssueKind.UNKNOWN_CODE: Severity.REPAIRABLE,
        IssueKind.UNKNOWN_SUBCODE: Severity.REPAIRABLE,
        IssueKind.INVALID_PAIR: Severity.REPAIRABLE,
        IssueKind.DIRECTION_MISMATCH: Severity.WARNING,
        IssueKind.HALLUCINATED_SPAN: Severity.REPAIRABLE,
        IssueKind.SPAN_NORMALIZED: Severity.WARNING,
        IssueKind.DUPLICATE_TUPLE: Severity.WARNING,
        IssueKind.UNKNOWN_FIELD: Severity.WARNING,
        IssueKind.MISSING_FIELD: Severity.REPAIRABLE,
    },
    Policy.STRICT: {
        IssueKind.NON_PARSEABLE: Severity.FATAL,
        IssueKind.TRUNCATED: Severity.FATAL,
        IssueKind.EXTRA_PROSE: Severity.WARNING,
        IssueKind.UNKNOWN_CODE: Severity.FATAL,
        IssueKind.UNKNOWN_SUBCODE: Severity.FATAL,
        IssueKind.INVALID_PAIR: Severity.FATAL,
        IssueKind.DIRECTION_MISMATCH: Severity.FATAL,
        IssueKind.HALLUCINATED_SPAN: Severity.FATAL,
        IssueKind.SPAN_NORMALIZED: Severity.FATAL,
        IssueKind.DUPLICATE_TUPLE: Severity.WARNING,
        IssueKind.UNKNOWN_FIELD: Severity.WARNING,
        IssueKind.MISSING_FIELD: Severity.FATAL,
    },
}


@dataclass(frozen=True)
class Issue:
    kind: IssueKind
    detail: str
    severity: Severity


@dataclass(frozen=True)
class ParseReport:
    outcome: Outcome
    annotations: tuple[Annotation, ...]
    issues: tuple[Issue, ...]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "annotations": [
                {
                    "code": a.code,
                    "subcode": a.subcode,
                    "span_text": a.span.text,
                    "start": a.span.start,
                    "end": a.span.end,
                }
                for a in self.annotations
            ],
            "issues": [
                {"kind": i.kind.value, "detail": i.detail, "severity": i.severity.value}
                for i in self.issues
            ],
        }


class NonParseable(ValueError):
    """No balanced results document could be located in the completion."""

    def __init__(self, message: str, truncated: bool = False):
        super().__init__(message)
        self.truncated = truncated


def extract_result_document(completion: str) -> str:
    """Return the first balanced ``{...}`` document containing a ``results`` key.

    Content after the stop string is ignored; surrounding prose and code
    fences are stripped. Raises :class:`NonParseable` when no balanced
    candidate exists, flagging truncation when an unbalanced opening
    brace is present.
    """
    text = completion.split(STOP_STRING, 1)[0]
    text = _FENCE_RE.sub(" ", text)
    decoder = json.JSONDecoder()
    i = 0
    first_open = text.find("{")
    while True:
        i = text.find("{", i)
        if i < 0:
            break
        try:
            obj, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i += 1
            continue
        if isinstance(obj, dict) and "results" in obj:
            return text[i:end]
        # Keep scanning inside non-matching objects so a nested results
        # document is still found.
        i += 1
    if first_open >= 0 and not _has_balanced_object(text, first_open):
        raise NonParseable("unbalanced result document", truncated=True)
    raise NonParseable("no results document found")


def _has_balanced_object(text: str, start: int) -> bool:
    depth = 0
    in_str = False
    escape = False
    for ch in text[start:]:
        if escape:
            escape = False
            continue
        if in_str:
            if ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return True
    return False


def _ground_span(span_text: str, message_text: str, lenient: bool):
    """Locate a span in the message. Returns (Span, normalized?) or None."""
    if not span_text:
        return None
    idx = message_text.find(span_text)
    if idx >= 0:
        return Span(start=idx, end=idx + len(span_text), text=span_text), False
    if not lenient:
        return None
    # Whitespace-collapsed fallback: runs of whitespace match any run of
    # whitespace; case and punctuation are preserved.
    parts = span_text.split()
    if not parts:
        return None
    pattern = r"\s+".join(re.escape(p) for p in parts)
    m = re.search(pattern, message_text)
    if m is None:
        return None
    return Span(start=m.start(), end=m.end(), text=message_text[m.start():m.end()]), True


def validate_completion(
    completion: str,
    message: Message,
    cb: Codebook,
    policy: Policy | str = Policy.LENIENT,
    aliases: Mapping[str, str] = DEFAULT_ALIASES,
) -> ParseReport:
    """Parse and validate a raw completion against a message and codebook.

    Never raises: every failure appears in the report. Item checks, in
    order: field presence, known Code, known Sub-code (aliases applied),
    pair validity, direction consistency, span grounding, de-duplication.
    """
    policy = Policy(policy) if isinstance(policy, str) else policy
    severity_of = _SEVERITY[policy]
    issues: list[Issue] = []

    def add(kind: IssueKind, detail: str) -> Severity:
        sev = severity_of[kind]
        issues.append(Issue(kind=kind, detail=detail, severity=sev))
        return sev

    if not isinstance(completion, str):
        completion = str(completion)

    try:
        doc_text = extract_result_document(completion)
    except NonParseable as exc:
        if exc.truncated:
            add(IssueKind.TRUNCATED, "result document is unbalanced")
        add(IssueKind.NON_PARSEABLE, str(exc))
        return ParseReport(Outcome.FAILED, (), tuple(issues))

    stripped = completion.split(STOP_STRING, 1)[0].strip()
    if _FENCE_RE.sub(" ", stripped).strip() != doc_text.strip():
        add(IssueKind.EXTRA_PROSE, "prose or fences surrounded the result document")

    doc = json.loads(doc_text)
    results = doc.get("results")
    if not isinstance(results, list):
        add(IssueKind.NON_PARSEABLE, '"results" is not a list')
        return ParseReport(Outcome.FAILED, (), tuple(issues))

    annotations: list[Annotation] = []
    seen: set[tuple] = set()
    failed = False
    for pos, item in enumerate(results):
        if not isinstance(item, dict):
            sev = add(IssueKind.MISSING_FIELD, f"item {pos} is not an object")
            failed |= sev is Severity.FATAL
            continue
        extra = set(item) - {"Code", "Sub-code", "Span"}
        if extra:
            add(IssueKind.UNKNOWN_FIELD, f"item {pos}: ignored keys {sorted(extra)}")
        missing = [k for k in ("Code", "Sub-code", "Span") if not isinstance(item.get(k), str)]
        if missing:
            sev = add(IssueKind.MISSING_FIELD, f"item {pos}: missing {missing}")
            failed |= sev is Severity.FATAL
            continue
        # Aliases never shadow identifiers the codebook declares.
        code = item["Code"]
        if code not in cb.codes:
            code = aliases.get(code, code)
        subcode = item["Sub-code"]
        if subcode not in cb.subcodes and subcode != "None":
            subcode = aliases.get(subcode, subcode)
        span_text = item["Span"]

        if code not in cb.codes:
            sev = add(IssueKind.UNKNOWN_CODE, f"item {pos}: unknown Code {item['Code']!r}")
            failed |= sev is Severity.FATAL
            continue
        known_sub = subcode in cb.subcodes or subcode == "None"
        if not known_sub:
            sev = add(IssueKind.UNKNOWN_SUBCODE, f"item {pos}: unknown Sub-code {item['Sub-code']!r}")
            failed |= sev is Severity.FATAL
            continue
        if not cb.is_valid_pair(code, subcode):
            sev = add(IssueKind.INVALID_PAIR, f"item {pos}: ({code!r}, {subcode!r}) is not a valid pair")
            failed |= sev is Severity.FATAL
            continue
        if not cb.is_direction_consistent(code, message.direction):
            sev = add(
                IssueKind.DIRECTION_MISMATCH,
                f"item {pos}: {code!r} inadmissible for direction {message.direction!r}",
            )
            if sev is Severity.FATAL:
                failed = True
                continue
        grounded = _ground_span(span_text, message.text, lenient=policy is Policy.LENIENT)
        if grounded is None:
            sev = add(IssueKind.HALLUCINATED_SPAN, f"item {pos}: span {span_text!r} not in message")
            failed |= sev is Severity.FATAL
            continue
        span, normalized = grounded
        if normalized:
            sev = add(
                IssueKind.SPAN_NORMALIZED,
                f"item {pos}: matched after whitespace collapse at [{span.start}, {span.end})",
            )
            if sev is Severity.FATAL:
                failed = True
                continue
        ann = Annotation(code=code, subcode=subcode, span=span)
        if ann.key() in seen:
            add(IssueKind.DUPLICATE_TUPLE, f"item {pos}: duplicate of an earlier tuple")
            continue
        seen.add(ann.key())
        annotations.append(ann)

    if failed:
        return ParseReport(Outcome.FAILED, (), tuple(issues))
    if issues:
        return ParseReport(Outcome.REPAIRED, tuple(annotations), tuple(issues))
    return ParseReport(Outcome.VALID, tuple(annotations), ())


# Failure-taxonomy precedence: structural problems dominate label
# problems, which dominate span problems, which dominate direction.
_TAXONOMY: tuple[tuple[FailureLabel, frozenset[IssueKind]], ...] = (
    (FailureLabel.FORMAT_DRIFT, frozenset({
        IssueKind.NON_PARSEABLE, IssueKind.TRUNCATED, IssueKind.EXTRA_PROSE,
        IssueKind.MISSING_FIELD, IssueKind.UNKNOWN_FIELD,
    })),
    (FailureLabel.LABEL_CONFUSION, frozenset({
        IssueKind.UNKNOWN_CODE, IssueKind.UNKNOWN_SUBCODE,
        IssueKind.INVALID_PAIR, IssueKind.DUPLICATE_TUPLE,
    })),
    (FailureLabel.SPAN_NOISE, frozenset({
        IssueKind.HALLUCINATED_SPAN, IssueKind.SPAN_NORMALIZED,
    })),
    (FailureLabel.DIRECTION_ERROR, frozenset({IssueKind.DIRECTION_MISMATCH})),
)


def classify_failure(report: ParseReport) -> FailureLabel:
    """Map a report's issues onto the four-way failure taxonomy."""
    if not report.issues:
        raise ValueError("report has no issues to classify")
    kinds = {i.kind for i in report.issues}
    fatal_kinds = {i.kind for i in report.issues if i.severity is Severity.FATAL}
    for pool in (fatal_kinds, kinds):
        if not pool:
            continue
        for label, members in _TAXONOMY:
            if pool & members:
                return label
    return FailureLabel.FORMAT_DRIFT


def write_reports(reports: Mapping[str, ParseReport], path) -> None:
    """Emit reports as JSON lines keyed by record id, sorted for stability."""
    with open(path, "w", encoding="utf-8") as fh:
        for record_id in sorted(reports):
            doc = {"id": record_id, **reports[record_id].to_dict()}
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
