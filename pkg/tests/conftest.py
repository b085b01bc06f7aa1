import sys
import os

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_bases():
    from msqale.corpus import make_toy_scenes

    return make_toy_scenes(4, side=96, seed=5)


@pytest.fixture(scope="session")
def small_corpus():
    """4 scenes x 3 versions, small enough for per-module tests."""
    from msqale.corpus import build_training_corpus, make_toy_scenes

    bases = make_toy_scenes(4, side=64, seed=11)
    scene_set, manifest = build_training_corpus(bases, 3, seed=11)
    return bases, scene_set, manifest
