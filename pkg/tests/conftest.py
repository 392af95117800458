import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
sys.path.insert(0, ROOT)

from IBPLab.drift_models import SineDrift, ZeroDrift  # noqa: E402
from IBPLab.simulate import ModelBinding, SimGrid  # noqa: E402
from IBPLab.spectral_core import SigmaOperator, SpectralOperator  # noqa: E402

CONFIG_DIR = os.path.join(ROOT, "configs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo runs that take more than a few seconds")


@pytest.fixture
def config_path():
    def _path(name):
        return os.path.join(CONFIG_DIR, name)
    return _path


@pytest.fixture
def ou_model():
    """dX = -X dt + dW on a one-mode truncation."""
    op = SpectralOperator.from_values([1.0])
    return ModelBinding(kind='semilinear', op=op, sig=SigmaOperator.identity(1), drift=ZeroDrift(1))


@pytest.fixture
def sine_model():
    op = SpectralOperator.from_power_rule(3)
    sig = SigmaOperator.from_diagonal(np.arange(1, 4, dtype=float) ** -0.5)
    return ModelBinding(kind='semilinear', op=op, sig=sig, drift=SineDrift(3, c=0.5))


@pytest.fixture
def unit_grid():
    return SimGrid(1.0, 64)


@pytest.fixture
def ou_settings():
    """Small OU experiment used by the harness and CLI tests."""
    return {
        "model": "semilinear",
        "operator": {"dim": 1, "eigenvalues": {"values": [1.0]}},
        "sigma": {"scale": 1.0},
        "drift": {"name": "zero", "params": {}},
        "direction": {"coefficients": [1.0]},
        "grid": {"T": 1.0, "steps": 32},
        "mc": {"paths": 4000, "seed": 20240601, "chunk_paths": 256, "richardson": True, "progress": False},
        "functions": [{"outer": "linear", "coordinates": [0], "label": "x"}],
        "invariance": {"samples": 2000, "dt": 0.01, "t": 0.5, "cov_rtol": 0.2, "chains": 64},
        "girsanov": {"eps": [0.1, 0.05], "paths": 2000},
    }
