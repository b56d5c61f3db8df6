import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ksms.motility import exp_decay, ks_pair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def exp_pair():
    # decreasing motility with the matched drift, alpha = 0
    return ks_pair(exp_decay(1.0), alpha=0.0)
