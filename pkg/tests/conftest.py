import numpy as np
import pytest

from sceneseg import default_taxonomy
from sceneseg.core import toy_taxonomy
from sceneseg.synth import SynthConfig, gen_corpus


@pytest.fixture(scope="session")
def tax():
    return default_taxonomy()


@pytest.fixture(scope="session")
def toy_tax():
    return toy_taxonomy(5)


@pytest.fixture(scope="session")
def corpus(tax):
    """The default 100-video synthetic corpus."""
    return gen_corpus(SynthConfig(), tax)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
