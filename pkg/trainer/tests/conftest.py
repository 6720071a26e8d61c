from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from support import make_pairs  # noqa: E402


@pytest.fixture(scope="session")
def pairs32():
    return make_pairs(32)
