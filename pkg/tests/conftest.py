import math
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def axis(i: int, dim: int = 8) -> np.ndarray:
    vec = np.zeros(dim)
    vec[i] = 1.0
    return vec


def vec_with_cosine(t: float, dim: int = 8) -> np.ndarray:
    """Unit vector whose cosine against axis 0 equals t."""
    vec = np.zeros(dim)
    vec[0] = t
    vec[1] = math.sqrt(1.0 - t * t)
    return vec


def unit(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    return vec / np.linalg.norm(vec)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_fixture_path() -> str:
    return str(FIXTURES / "golden_fixture.json")


@pytest.fixture
def golden_corpus_path() -> str:
    return str(FIXTURES / "golden_corpus.jsonl")


@pytest.fixture
def golden_eval_path() -> str:
    return str(FIXTURES / "golden_eval.jsonl")
