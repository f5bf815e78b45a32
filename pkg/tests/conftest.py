import numpy as np
import pytest

from symopt import make_library


@pytest.fixture
def basic_lib():
    """One-variable library with the default operator set."""
    return make_library(("add", "sub", "mul", "div", "sin", "cos", "exp", "log"), 1)


@pytest.fixture
def fig_lib():
    """Two variables plus the constant placeholder (sampling-figure setup)."""
    return make_library(
        ("add", "sub", "mul", "div", "sin", "cos", "exp", "log"), 2, include_const=True
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ids_of(lib, *symbols):
    return tuple(lib.id_of(s) for s in symbols)
