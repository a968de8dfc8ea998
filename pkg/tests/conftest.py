import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hypothesis import settings  # noqa: E402

settings.register_profile("lowgain", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("lowgain")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
