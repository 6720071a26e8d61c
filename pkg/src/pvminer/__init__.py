"""Desk-scale toolkit for hierarchical, span-grounded patient voice extraction:
codebook management, prompt construction, completion parsing, evaluation
metrics, multi-label splitting, and SFT data preparation."""

__version__ = "0.1.0"

from .codebook import (
    Codebook,
    load_codebook,
    load_default_codebook,
    dump_codebook,
)
from .corpus import (
    Annotation,
    GoldRecord,
    Message,
    Span,
    corpus_stats,
    read_corpus,
    stratified_split,
    synthesize_corpus,
    write_corpus,
)
from .metrics import EvalReport, Level, PRF, evaluate, span_match
from .parse import ParseReport, classify_failure, validate_completion
from .prompt import TemplateKind, build_sft_query, load_template, render_prompt
from .sftprep import TrainPair, build_pairs, export_manifest, serialize_annotations

__all__ = [
    "Annotation",
    "Codebook",
    "EvalReport",
    "GoldRecord",
    "Level",
    "Message",
    "PRF",
    "ParseReport",
    "Span",
    "TemplateKind",
    "TrainPair",
    "build_pairs",
    "build_sft_query",
    "classify_failure",
    "corpus_stats",
    "dump_codebook",
    "evaluate",
    "export_manifest",
    "load_codebook",
    "load_default_codebook",
    "load_template",
    "read_corpus",
    "render_prompt",
    "serialize_annotations",
    "span_match",
    "stratified_split",
    "synthesize_corpus",
    "validate_completion",
    "write_corpus",
]
