"""Regenerate the committed golden prompt renders.

Run from the repository root:

    python3 tests/golden/generate.py

Only rerun when a deliberate template or codebook change is made; the
golden files define the canonical byte-exact render.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from fixtures import APPENDIX_MESSAGE, exemplars  # noqa: E402

from pvminer.codebook import load_default_codebook  # noqa: E402
from pvminer.corpus import Message  # noqa: E402
from pvminer.prompt import load_template, render_prompt  # noqa: E402

GOLDEN_DIR = Path(__file__).resolve().parent


def main() -> None:
    cb = load_default_codebook()
    for kind in ("baseline", "engineered"):
        template = load_template(kind)
        for shots in (0, 1, 2):
            for direction in ("Y", "N"):
                message = Message(id="golden", text=APPENDIX_MESSAGE, direction=direction)
                text = render_prompt(template, cb, message, exemplars(shots))
                name = f"{kind}_{shots}shot_{direction}.txt"
                (GOLDEN_DIR / name).write_text(text, encoding="utf-8")
                print(f"wrote {name} ({len(text)} bytes)")


if __name__ == "__main__":
    main()
