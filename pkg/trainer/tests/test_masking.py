from __future__ import annotations

import pytest

from pvtrainer.manifest import TrainPair
from pvtrainer.masking import TokenizedPair, decode_masked, tokenize_with_boundary
from pvtrainer.tokenizer import ByteTokenizer

from support import make_pairs

TOK = ByteTokenizer()


def test_mask_opens_at_boundary():
    pair = TrainPair(id="x", query="abc", completion="XY", boundary=3)
    tp = tokenize_with_boundary(pair, TOK)
    # BOS + a b c X Y + EOS
    assert tp.input_ids[0] == TOK.bos_id and tp.input_ids[-1] == TOK.eos_id
    assert tp.mask == (0, 0, 0, 0, 1, 1, 1)
    assert tp.straddled == ()


def test_completion_only_pair_fully_masked():
    pair = TrainPair(id="x", query="", completion="XY", boundary=0)
    tp = tokenize_with_boundary(pair, TOK)
    assert tp.mask == (0, 1, 1, 1)  # only BOS unmasked
    assert sum(tp.mask) >= 1


def test_masked_region_decodes_to_completion(pairs32):
    for pair in pairs32:
        tp = tokenize_with_boundary(pair, TOK)
        assert decode_masked(tp, TOK) == pair.completion


def test_multibyte_characters():
    pair = TrainPair(id="x", query="café", completion="naïve", boundary=4)
    tp = tokenize_with_boundary(pair, TOK)
    assert decode_masked(tp, TOK) == "naïve"
    assert TOK.decode(list(tp.input_ids)) == "cafénaïve"


def test_straddling_token_masked_and_recorded():
    class CoarseTokenizer(ByteTokenizer):
        """Fake subword tokenizer: one token per two characters."""

        def encode_with_offsets(self, text):
            ids, offsets = [], []
            for i in range(0, len(text), 2):
                chunk = text[i : i + 2]
                ids.append(ord(chunk[0]) % self.BYTE_VOCAB)
                offsets.append((i, i + len(chunk)))
            return ids, offsets

    pair = TrainPair(id="x", query="abc", completion="XY", boundary=3)
    tp = tokenize_with_boundary(pair, CoarseTokenizer())
    # Tokens cover chars (0,2), (2,4), (4,5); the middle one straddles 3.
    assert tp.mask == (0, 0, 1, 1, 1)
    assert tp.straddled == (2,)


def test_empty_mask_rejected():
    with pytest.raises(ValueError):
        TokenizedPair(id="x", input_ids=(1, 2), mask=(0, 0))
    with pytest.raises(ValueError):
        TokenizedPair(id="x", input_ids=(1, 2), mask=(1,))
