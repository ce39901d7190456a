from pathlib import Path

import numpy as np
import pytest

from phaselab.config import settings
from phaselab.models import EnergyParams, Grid, Normalization, PotentialSpec
from phaselab.numerics.fields import Exterior, Field, ball_mask
from phaselab.numerics.potentials import ZeroPotential, default_spec


@pytest.fixture(autouse=True)
def restore_settings():
    """Runner overrides mutate the shared settings; put them back after each test"""
    saved = {"N_JOBS": settings.N_JOBS, "RANDOM_SEED": settings.RANDOM_SEED}
    yield
    for key, value in saved.items():
        setattr(settings, key, value)


@pytest.fixture
def spec2() -> PotentialSpec:
    return default_spec(2.0)


@pytest.fixture
def calibrated_spec2() -> PotentialSpec:
    return default_spec(2.0, Normalization.APPENDIX, c=0.5)


@pytest.fixture
def zero_spec() -> PotentialSpec:
    return PotentialSpec(m=2.0, hook=ZeroPotential())


@pytest.fixture
def sub_params() -> EnergyParams:
    """1D, sp = 0.5"""
    return EnergyParams(s=0.25, p=2.0, n=1)


@pytest.fixture
def super_params() -> EnergyParams:
    """1D, sp = 1.5"""
    return EnergyParams(s=0.75, p=2.0, n=1)


@pytest.fixture
def grid_1d() -> Grid:
    return Grid.from_radius(1, 0.1, 2.0)


def random_field(grid: Grid, radius: float, seed: int, level: float = -1.0, spread: float = 0.9) -> Field:
    """Seeded values in [-spread, spread] on B_radius, `level` elsewhere and outside the box"""
    rng = np.random.default_rng(seed)
    values = np.full(grid.cell_count ** grid.n, level)
    inside = ball_mask(grid, radius)
    values[inside] = rng.uniform(-spread, spread, size=np.count_nonzero(inside))
    return Field(grid, values, Exterior.constant(level))


@pytest.fixture
def write_config(tmp_path):
    def _write(text: str, name: str = "experiment.cfg") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write
