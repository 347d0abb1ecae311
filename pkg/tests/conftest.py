import numpy as np
import pytest

from lipwave.data import synth_corpus


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Smallest useful corpus: 2 words, 1 identity, 4/2/2 samples."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    return synth_corpus(str(root), n_words=2, n_identities=1,
                        n_train=4, n_val=2, n_test=2, seed=0)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Mid-size corpus for data-plumbing tests: 3 words, 2 identities."""
    root = tmp_path_factory.mktemp("small_corpus")
    return synth_corpus(str(root), n_words=3, n_identities=2,
                        n_train=9, n_val=3, n_test=6, seed=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
