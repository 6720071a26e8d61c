"""Build a supervised-fine-tuning manifest from a synthetic corpus.

Shows the (query, completion, boundary) contract the trainer consumes:
the boundary is a character offset into query + completion marking where
the loss mask turns on.

Run from the repository root:

    python3 demos/sft_manifest_walkthrough.py
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from pvminer.codebook import load_default_codebook
from pvminer.corpus import long_tail_profile, synthesize_corpus
from pvminer.prompt import load_template, render_instruction
from pvminer.sftprep import build_pairs, export_manifest, read_manifest


def main() -> None:
    cb = load_default_codebook()
    records = synthesize_corpus(cb, long_tail_profile(cb), n=20, seed=3)

    instruction = render_instruction(load_template("engineered"), cb)
    pairs = build_pairs(records, instruction, include_stop=True)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "sft.jsonl"
        export_manifest(pairs, path, seed=3, config={"template": "engineered"})
        print(f"manifest: {path.stat().st_size} bytes, {len(read_manifest(path))} pairs")
        print("header:", path.read_text().splitlines()[0])

    pair = pairs[0]
    print()
    print(f"example pair {pair.id!r}:")
    print(f"  query ends:   ...{pair.query[-60:]!r}")
    print(f"  boundary:     {pair.boundary} (== len(query): {pair.boundary == len(pair.query)})")
    print(f"  completion:   {pair.completion[:80]}...")


if __name__ == "__main__":
    main()
