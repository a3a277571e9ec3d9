import numpy as np
import pytest

from plgeodesics.generators import unit_square


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def square():
    return unit_square()


def relative_error(actual, expected) -> float:
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.abs(actual - expected).max() / max(np.abs(expected).max(), 1e-300))


def frobenius_error(actual, expected) -> float:
    return float(np.linalg.norm(np.asarray(actual) - np.asarray(expected)) / np.linalg.norm(expected))
