import math
from importlib import resources

import numpy as np
import pytest

from parakam import action, intlat

GOLDEN = (math.sqrt(5) - 1) / 2


def builtin(name: str) -> action.ActionPair:
    path = resources.files("parakam") / "data" / f"{name}.json"
    with resources.as_file(path) as p:
        return action.load_action(p)


def unimat(rows):
    return intlat.make_unimat(rows)


def id_plus(d: int, *units):
    """Identity plus the listed matrix units (one-based row, column)."""
    m = intlat.identity(d)
    for i, j in units:
        m = intlat.mat_add(m, intlat.elementary(d, i, j))
    return m


@pytest.fixture(scope="session")
def ex3():
    return builtin("ex3")


@pytest.fixture(scope="session")
def ex33():
    return builtin("ex33")


@pytest.fixture(scope="session")
def ex5():
    return builtin("ex5")


@pytest.fixture(scope="session")
def ex_id():
    return builtin("ex_id")


@pytest.fixture(scope="session")
def ex_rankone():
    return builtin("ex_rankone")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
