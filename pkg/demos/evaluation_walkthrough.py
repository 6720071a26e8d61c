"""End-to-end walkthrough: synthesize a corpus, split it, simulate model
output, and score it.

No network access needed; a tiny "model" is simulated by perturbing the
gold annotations so the report shows non-trivial numbers.

Run from the repository root:

    python3 demos/evaluation_walkthrough.py
"""

from __future__ import annotations

import random

from pvminer.codebook import load_default_codebook
from pvminer.corpus import long_tail_profile, stratified_split, synthesize_corpus
from pvminer.metrics import evaluate, format_report
from pvminer.parse import validate_completion
from pvminer.sftprep import serialize_annotations


def main() -> None:
    cb = load_default_codebook()
    print(f"codebook: {len(cb.codes)} codes, {len(cb.unique_subcodes())} sub-codes")

    # 1. A seeded synthetic corpus with a long-tailed label profile.
    records = synthesize_corpus(cb, long_tail_profile(cb), n=300, seed=42)
    split = stratified_split(records, {"train": 0.8, "test": 0.2}, seed=42)
    test_ids = set(split.folds["test"])
    test = [r for r in records if r.id in test_ids]
    print(f"synthesized {len(records)} records; evaluating on {len(test)} test records")

    # 2. Simulate completions: mostly faithful, some noisy, some malformed.
    rng = random.Random(7)
    reports = {}
    for record in test:
        completion = serialize_annotations(record.annotations)
        roll = rng.random()
        if roll < 0.10:
            completion = completion[: len(completion) // 2]  # truncated output
        elif roll < 0.25:
            completion = "Sure, here you go: " + completion  # prose wrapper
        reports[record.id] = validate_completion(completion, record.message, cb)

    outcomes = {}
    for report in reports.values():
        outcomes[report.outcome.name] = outcomes.get(report.outcome.name, 0) + 1
    print(f"parse outcomes: {outcomes}")

    # 3. Score. Failed parses count as empty predictions.
    print()
    print(format_report(evaluate(test, reports, cb)))


if __name__ == "__main__":
    main()
