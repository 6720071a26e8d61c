"""Byte-level tokenizer with character offsets.

One token per UTF-8 byte, plus BOS/EOS/PAD specials. Offsets are reported
in *character* space so the manifest's character boundary can be applied
directly; all bytes of a multi-byte character share that character's
span, and a character boundary therefore never falls inside a token's
byte sequence under normal use (the masking layer still handles the
straddle case for other tokenizers).
"""

from __future__ import annotations


class ByteTokenizer:
    BYTE_VOCAB = 256

    def __init__(self):
        self.bos_id = self.BYTE_VOCAB
        self.eos_id = self.BYTE_VOCAB + 1
        self.pad_id = self.BYTE_VOCAB + 2
        self.vocab_size = self.BYTE_VOCAB + 3

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        """Token ids plus per-token (char_start, char_end) spans.

        No specials are added; callers append BOS/EOS themselves so the
        offsets stay aligned with the raw text.
        """
        ids: list[int] = []
        offsets: list[tuple[int, int]] = []
        for i, char in enumerate(text):
            for byte in char.encode("utf-8"):
                ids.append(byte)
                offsets.append((i, i + 1))
        return ids, offsets

    def encode(self, text: str) -> list[int]:
        return self.encode_with_offsets(text)[0]

    def decode(self, ids: list[int]) -> str:
        data = bytes(i for i in ids if i < self.BYTE_VOCAB)
        return data.decode("utf-8", errors="replace")
