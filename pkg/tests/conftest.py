"""Shared fixtures: a small 1-d pipeline setup reused across test modules."""

import numpy as np
import pytest

from fracparab.cli import _setup_1d, _band_limited
from fracparab.semigroup import SemigroupHandle


@pytest.fixture(scope="session")
def small_1d():
    """N_x=48, N_t=32 identity-coefficient setup: (grid, tg, masks, cond, dec)."""
    return _setup_1d(48, 32)


@pytest.fixture(scope="session")
def handle_1d(small_1d):
    _, _, _, _, dec = small_1d
    return SemigroupHandle(dec)


@pytest.fixture(scope="session")
def band_field(small_1d):
    """Band-limited real space-time field on modes 1..3."""
    grid, tg, _, _, dec = small_1d
    return _band_limited(grid, tg, dec, [1, 2, 3])


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
