import pytest

import scalelink as sl
from scalelink.synthetic import make_twin_world

# 192 starts instead of the default 4704; covers the same box, so noiseless
# fits still land in the global basin while multi-seed tests stay fast.
SMALL_GRID = sl.StartGrid(
    e=(0.25, 1.0, 2.0),
    log10_a=(5.0, 8.0),
    log10_b=(7.0, 10.0),
    alpha=(0.2, 0.35, 0.5, 0.65),
    beta=(0.2, 0.35, 0.5, 0.65),
)


@pytest.fixture(scope="session")
def small_cfg():
    return sl.FitConfig(grid=SMALL_GRID)


@pytest.fixture(scope="session")
def ref_law():
    # Five-parameter nested law in the web-corpus regime; doubles as the
    # generator for all synthetic grids.
    return sl.ScalingLaw(form="nested", E=1.97, A=6.68e7, B=8.90e8, alpha=0.41, beta=0.46)


@pytest.fixture(scope="session")
def noisy_world():
    return make_twin_world(seed=0, noise_sigma=0.01)


@pytest.fixture(scope="session")
def clean_world():
    return make_twin_world(seed=0, noise_sigma=0.0)
