"""Hierarchical annotation schema: Codes, Sub-codes, and validity rules.

A codebook declares the label vocabulary at two levels (Codes and
Sub-codes), the per-Code set of valid Sub-codes, and the per-Code set of
admissible message directions. It is loaded from a YAML document and is
immutable afterwards, so instances can be shared freely across threads.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping

import yaml

# Sentinel Sub-code name for Codes that define no Sub-codes.
NO_SUBCODE = "None"

DIRECTION_Y = "Y"
DIRECTION_N = "N"
DIRECTIONS = (DIRECTION_Y, DIRECTION_N)

SCHEMA_VERSION = 1

DEFAULT_CODEBOOK_RESOURCE = "codebook.yaml"


class CodebookError(ValueError):
    """Base class for codebook loading/validation failures."""


class MalformedDocument(CodebookError):
    pass


class DuplicateCode(CodebookError):
    def __init__(self, name: str):
        super().__init__(f"duplicate Code: {name!r}")
        self.name = name


class DuplicateSubcode(CodebookError):
    def __init__(self, name: str):
        super().__init__(f"duplicate Sub-code: {name!r}")
        self.name = name


class DanglingSubcodeReference(CodebookError):
    def __init__(self, name: str, code: str):
        super().__init__(f"Code {code!r} maps to undeclared Sub-code {name!r}")
        self.name = name
        self.code = code


class EmptyMapping(CodebookError):
    def __init__(self, code: str):
        super().__init__(f"Code {code!r} has an empty Sub-code mapping")
        self.code = code


@dataclass(frozen=True)
class Codebook:
    """Immutable two-level label schema.

    ``codes`` and ``subcodes`` map identifier -> one-line definition and
    preserve declaration order. ``mapping`` assigns each Code its set of
    valid Sub-code names (possibly exactly ``{"None"}``).
    ``direction_rules`` assigns each Code the directions it admits.
    Identifiers are compared byte-exact; alias normalization is a parser
    concern, not a schema concern.
    """

    codes: Mapping[str, str]
    subcodes: Mapping[str, str]
    mapping: Mapping[str, frozenset[str]]
    direction_rules: Mapping[str, frozenset[str]]
    schema_version: int = SCHEMA_VERSION

    def is_valid_pair(self, code: str, subcode: str) -> bool:
        """True iff ``code`` is declared and ``subcode`` is valid under it.

        Unknown identifiers yield False, never an error.
        """
        valid = self.mapping.get(code)
        return valid is not None and subcode in valid

    def is_direction_consistent(self, code: str, direction: str) -> bool:
        """True iff ``code`` admits messages with the given direction."""
        allowed = self.direction_rules.get(code)
        return allowed is not None and direction in allowed

    def subcodes_for(self, code: str) -> tuple[str, ...]:
        """Valid Sub-codes of ``code`` in declaration order."""
        valid = self.mapping.get(code, frozenset())
        ordered = [u for u in self.subcodes if u in valid]
        if NO_SUBCODE in valid:
            ordered.append(NO_SUBCODE)
        return tuple(ordered)

    def valid_pairs(self) -> tuple[tuple[str, str], ...]:
        """All (Code, Sub-code) pairs, in declaration order."""
        return tuple(
            (c, u) for c in self.codes for u in self.subcodes_for(c)
        )

    def unique_subcodes(self) -> frozenset[str]:
        """Non-sentinel Sub-code names reachable through the mapping."""
        out: set[str] = set()
        for valid in self.mapping.values():
            out |= valid
        out.discard(NO_SUBCODE)
        return frozenset(out)


def _require(cond: bool, exc: CodebookError) -> None:
    if not cond:
        raise exc


def _as_entries(raw, section: str) -> dict[str, str]:
    """Normalize a codes/subcodes section into an ordered name->definition map."""
    if not isinstance(raw, list):
        raise MalformedDocument(f"section {section!r} must be a list")
    out: dict[str, str] = {}
    for item in raw:
        if isinstance(item, str):
            name, definition = item, ""
        elif isinstance(item, dict) and "name" in item:
            name = item["name"]
            definition = str(item.get("definition", ""))
        else:
            raise MalformedDocument(
                f"section {section!r}: entries must be names or "
                f"{{name, definition}} maps, got {item!r}"
            )
        if not isinstance(name, str) or not name:
            raise MalformedDocument(f"section {section!r}: empty identifier")
        if name in out:
            if section == "codes":
                raise DuplicateCode(name)
            raise DuplicateSubcode(name)
        out[name] = definition
    return out


def load_codebook(source: str | Path | IO[str]) -> Codebook:
    """Load and validate a codebook from a YAML path, stream, or text.

    Raises a :class:`CodebookError` subclass naming the offending
    identifier when the document violates a schema invariant.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedDocument(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be a mapping")
    for key in ("codes", "subcodes", "mapping", "direction_rules"):
        if key not in doc:
            raise MalformedDocument(f"missing top-level key {key!r}")

    codes = _as_entries(doc["codes"], "codes")
    subcodes = _as_entries(doc["subcodes"], "subcodes")
    _require(NO_SUBCODE not in codes, MalformedDocument(f"{NO_SUBCODE!r} is reserved"))
    _require(
        NO_SUBCODE not in subcodes,
        MalformedDocument(f"{NO_SUBCODE!r} is an implicit Sub-code; do not declare it"),
    )

    raw_mapping = doc["mapping"]
    if not isinstance(raw_mapping, dict):
        raise MalformedDocument("section 'mapping' must be a mapping")
    mapping: dict[str, frozenset[str]] = {}
    for code, subs in raw_mapping.items():
        if code not in codes:
            raise MalformedDocument(f"mapping references undeclared Code {code!r}")
        if not isinstance(subs, list) or not subs:
            raise EmptyMapping(code)
        for u in subs:
            if u != NO_SUBCODE and u not in subcodes:
                raise DanglingSubcodeReference(u, code)
        mapping[code] = frozenset(subs)
    for code in codes:
        if code not in mapping:
            raise EmptyMapping(code)

    raw_rules = doc["direction_rules"]
    if not isinstance(raw_rules, dict):
        raise MalformedDocument("section 'direction_rules' must be a mapping")
    direction_rules: dict[str, frozenset[str]] = {}
    for code in codes:
        rule = raw_rules.get(code, "both")
        if rule == "both":
            allowed = frozenset(DIRECTIONS)
        elif rule in DIRECTIONS:
            allowed = frozenset((rule,))
        else:
            raise MalformedDocument(
                f"direction rule for {code!r} must be 'Y', 'N', or 'both', got {rule!r}"
            )
        direction_rules[code] = allowed

    version = doc.get("schema_version", SCHEMA_VERSION)
    if not isinstance(version, int):
        raise MalformedDocument("schema_version must be an integer")

    return Codebook(
        codes=codes,
        subcodes=subcodes,
        mapping=mapping,
        direction_rules=direction_rules,
        schema_version=version,
    )


def dump_codebook(cb: Codebook) -> str:
    """Serialize a codebook back to the YAML file format.

    Round-trips: ``load_codebook(dump_codebook(cb)) == cb``.
    """
    doc = {
        "schema_version": cb.schema_version,
        "codes": [{"name": c, "definition": d} for c, d in cb.codes.items()],
        "subcodes": [{"name": u, "definition": d} for u, d in cb.subcodes.items()],
        "mapping": {c: list(cb.subcodes_for(c)) for c in cb.codes},
        "direction_rules": {
            c: ("both" if len(allowed) == 2 else next(iter(allowed)))
            for c, allowed in cb.direction_rules.items()
        },
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def default_codebook_path() -> Path:
    """Filesystem path of the shipped default codebook."""
    ref = importlib.resources.files("pvminer.data") / DEFAULT_CODEBOOK_RESOURCE
    return Path(str(ref))


def load_default_codebook() -> Codebook:
    """Load the codebook shipped with the package."""
    return load_codebook(default_codebook_path())


# Module-level convenience wrappers mirroring the method surface.

def is_valid_pair(cb: Codebook, code: str, subcode: str) -> bool:
    return cb.is_valid_pair(code, subcode)


def is_direction_consistent(cb: Codebook, code: str, direction: str) -> bool:
    return cb.is_direction_consistent(code, direction)
