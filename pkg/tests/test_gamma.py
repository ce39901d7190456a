import math

import pytest

from phaselab.analysis.gamma import GAMMA_COLUMNS, gamma_frame, gamma_sweep, gradient_limit, is_resolved
from phaselab.config import settings
from phaselab.errors import DomainError, InputError
from phaselab.models import Grid
from phaselab.numerics.fields import CosBumpProfile, constant_field, make_field


@pytest.fixture
def bump():
    return make_field(Grid.from_radius(1, 1.0 / 256.0, 1.5), CosBumpProfile())


def test_gradient_limit_of_cos_bump(bump):
    assert gradient_limit(bump, 1.5, 2.0) == pytest.approx(math.pi ** 2 / 4.0, rel=1e-4)


def test_constant_field_has_zero_limit_and_energy():
    v = constant_field(Grid.from_radius(1, 0.1, 2.0), 0.0)
    sweep = gamma_sweep(v, 1.0, 2.0, [0.3, 0.6])
    assert sweep.limit == 0.0
    assert sweep.measured == [0.0, 0.0]
    assert sweep.relative_errors == [0.0, 0.0]


@pytest.mark.parametrize("s,h,expected", [(0.9, 0.01, True), (0.95, 0.01, True), (0.999, 1.0 / 256.0, False)])
def test_resolution(s, h, expected):
    assert is_resolved(s, h) is expected


def test_unresolved_points_are_marked():
    v = make_field(Grid.from_radius(1, 1.0 / 16.0, 1.5), CosBumpProfile())
    sweep = gamma_sweep(v, 1.5, 2.0, [0.5, 0.9])
    assert sweep.resolved == [True, False]


@pytest.mark.parametrize("s_list,error", [
    ([], InputError),
    ([0.5, 0.4], InputError),
    ([0.5, 1.0], DomainError),
])
def test_bad_s_list(bump, s_list, error):
    with pytest.raises(error):
        gamma_sweep(bump, 1.5, 2.0, s_list)


def test_needs_constant_exterior():
    v = make_field(Grid.from_radius(1, 0.1, 0.5), CosBumpProfile())
    with pytest.raises(DomainError):
        gamma_sweep(v, 0.5, 2.0, [0.5])


def test_energies_recorded_with_a_potential(spec2):
    v = make_field(Grid.from_radius(1, 1.0 / 64.0, 1.5), CosBumpProfile())
    sweep = gamma_sweep(v, 1.5, 2.0, [0.5, 0.8], spec2)
    assert len(sweep.energies) == 2
    assert all(energy > 0.0 for energy in sweep.energies)
    assert sweep.local_energy > math.pi ** 2 / 8.0 * 0.99
    frame = gamma_frame(sweep)
    assert frame.columns == GAMMA_COLUMNS
    assert frame["limit"].to_list() == [sweep.limit, sweep.limit]


@pytest.mark.slow
def test_cos_bump_converges_to_the_local_energy():
    v = make_field(Grid.from_radius(1, 1.0 / 1024.0, 3.0), CosBumpProfile())
    sweep = gamma_sweep(v, 3.0, 2.0, [0.8, 0.9, 0.95])
    assert all(sweep.resolved)
    errors = sweep.relative_errors
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 0.10


def test_threaded_sweep_matches_serial(bump):
    serial = gamma_sweep(bump, 1.5, 2.0, [0.5, 0.7, 0.9])
    settings.N_JOBS = 2
    threaded = gamma_sweep(bump, 1.5, 2.0, [0.5, 0.7, 0.9])
    assert threaded.measured == serial.measured
