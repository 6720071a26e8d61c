from __future__ import annotations

import pytest

from pvminer.codebook import load_default_codebook
from pvminer.corpus import long_tail_profile, synthesize_corpus


@pytest.fixture(scope="session")
def cb():
    return load_default_codebook()


@pytest.fixture(scope="session")
def synthetic_corpus(cb):
    return synthesize_corpus(cb, long_tail_profile(cb), 200, seed=11)
