import numpy as np
import pytest

from kwscascade.phonemes import load_fuzzy_map, load_inventory, load_lexicon


@pytest.fixture(scope="session")
def inv():
    return load_inventory()


@pytest.fixture(scope="session")
def lex(inv):
    return load_lexicon(inv=inv)


@pytest.fixture(scope="session")
def fuzzy(inv):
    return load_fuzzy_map(inv=inv)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
