import numpy as np
import pytest

from impactbeam.continuation import StepControls, frequency_response
from impactbeam.model import ModelParams


@pytest.fixture(scope="session")
def fig4_branch():
    """Shared moderate-impact frequency response (the expensive sweep)."""
    params = ModelParams(xi=0.03, beta=0.885, forcing=0.2, alpha=5.9,
                         nu=0.0, p=100.0)
    return frequency_response(params, (0.2, 3.5),
                              step=StepControls(ds=0.02, ds_max=0.08))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2026)
