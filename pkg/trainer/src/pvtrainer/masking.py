"""Loss-mask construction from the manifest's character boundary."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .manifest import TrainPair
from .tokenizer import ByteTokenizer

logger = logging.getLogger(__name__)


class BoundarySplitsToken(Warning):
    """A token straddles the boundary; it was masked and recorded."""


@dataclass(frozen=True)
class TokenizedPair:
    """Token ids with the binary completion mask.

    ``mask[t] == 1`` iff token t lies at or beyond the character boundary
    (plus the trailing EOS, so the model learns to stop). BOS is prepended
    unmasked. ``straddled`` records indices of tokens that crossed the
    boundary and were conservatively masked.
    """

    id: str
    input_ids: tuple[int, ...]
    mask: tuple[int, ...]
    straddled: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.input_ids) != len(self.mask):
            raise ValueError("input_ids and mask must have equal length")
        if sum(self.mask) < 1:
            raise ValueError(f"pair {self.id!r}: mask selects no tokens")


def tokenize_with_boundary(pair: TrainPair, tokenizer: ByteTokenizer) -> TokenizedPair:
    """Tokenize query + completion and mask from the boundary onward.

    The first token whose character span starts at or beyond the boundary
    opens the masked region. A token straddling the boundary (possible
    with subword tokenizers) is masked and its index recorded.
    """
    ids, offsets = tokenizer.encode_with_offsets(pair.text)
    mask = []
    straddled = []
    for t, (start, end) in enumerate(offsets):
        if start >= pair.boundary:
            mask.append(1)
        elif end > pair.boundary:
            mask.append(1)
            straddled.append(t + 1)  # index after BOS prepend below
        else:
            mask.append(0)
    if straddled:
        logger.warning("pair %s: %d token(s) straddle the boundary; masked",
                       pair.id, len(straddled))
    input_ids = (tokenizer.bos_id, *ids, tokenizer.eos_id)
    full_mask = (0, *mask, 1)
    return TokenizedPair(id=pair.id, input_ids=input_ids, mask=full_mask,
                         straddled=tuple(straddled))


def decode_masked(tokenized: TokenizedPair, tokenizer: ByteTokenizer) -> str:
    """Decode only the masked region (round-trip check for the completion)."""
    return tokenizer.decode(
        [i for i, m in zip(tokenized.input_ids, tokenized.mask) if m]
    )
