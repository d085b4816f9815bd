import os

# pick the available threading layer directly; avoids the TBB version warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
