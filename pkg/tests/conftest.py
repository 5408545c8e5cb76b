import numpy as np
import pytest

from covert_isac.scenario import SystemConfig, generate_channels
from covert_isac.beampattern import make_grid


@pytest.fixture(scope="session")
def default_cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def small_cfg():
    """Reduced scenario for optimizer unit tests (fast solves)."""
    return SystemConfig(n=6, n_angles=60, target_angles=(-40.0, 30.0), r_min=3.0)


@pytest.fixture(scope="session")
def small_grid(small_cfg):
    return make_grid(small_cfg)


@pytest.fixture(scope="session")
def small_channels(small_cfg):
    return {mode: generate_channels(small_cfg, mode)
            for mode in ("bounded", "gaussian", "statistical")}


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_psd(rng, n, scale=1.0):
    a = crandn(rng, n, n)
    m = a @ a.conj().T
    return scale * m / max(np.trace(m).real, 1e-12) * n
