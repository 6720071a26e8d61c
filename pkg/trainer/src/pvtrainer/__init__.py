"""Masked-objective supervised fine-tuning for pvminer SFT manifests.

The trainer depends only on the manifest byte-format exported by
``pvminer prepare-sft`` (JSONL of query/completion/boundary triples),
never on pvminer internals.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .manifest import ManifestError, TrainPair, read_manifest
from .tokenizer import ByteTokenizer
from .masking import BoundarySplitsToken, TokenizedPair, tokenize_with_boundary
from .model import LoraConfig, build_model, lora_parameters, lora_state_dict
from .train import TrainConfig, TrainResult, masked_loss, train

__all__ = [
    "ManifestError",
    "TrainPair",
    "read_manifest",
    "ByteTokenizer",
    "BoundarySplitsToken",
    "TokenizedPair",
    "tokenize_with_boundary",
    "LoraConfig",
    "build_model",
    "lora_parameters",
    "lora_state_dict",
    "TrainConfig",
    "TrainResult",
    "masked_loss",
    "train",
]
