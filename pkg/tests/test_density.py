import math

import pytest

from phaselab.analysis.density import (
    DENSITY_COLUMNS,
    band_thresholds,
    density_frame,
    density_scan,
    full_density_scan,
)
from phaselab.cli.experiments import run_density_scan
from phaselab.errors import ConfigError, DomainError, InputError, SeedConditionError
from phaselab.models import EnergyParams, ExperimentConfig, ExperimentKind, Grid, Normalization
from phaselab.numerics.barriers import regime_bound
from phaselab.numerics.fields import TwoPhaseProfile, constant_field, make_field


@pytest.fixture
def line() -> Grid:
    return Grid.from_radius(1, 0.25, 8.0)


@pytest.fixture
def step(line):
    return make_field(line, TwoPhaseProfile(jump=0.125))


class TestThresholds:
    def test_well_width_enters_the_band(self, calibrated_spec2):
        low, high = band_thresholds(calibrated_spec2, (0.2, 0.1))
        assert low == pytest.approx(-1.0 + calibrated_spec2.q)
        assert high == 0.2

    def test_missing_well_width(self, spec2):
        with pytest.raises(ConfigError):
            band_thresholds(spec2, (0.0, 0.0))

    def test_threshold_range(self, calibrated_spec2):
        with pytest.raises(DomainError):
            band_thresholds(calibrated_spec2, (1.0, 0.0))


class TestDensityScan:
    def test_pure_phase_has_density_two(self, line, calibrated_spec2):
        scan = density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), [0.5, 1.0, 2.0])
        assert scan.lhs_over_rn == pytest.approx([2.0, 2.0, 2.0])
        assert scan.fitted_exponent == pytest.approx(1.0)
        assert scan.c_tilde_hat == pytest.approx(2.0)
        assert scan.interface_values == [0.0, 0.0, 0.0]
        assert scan.sup_bound_ok

    def test_disc_density_in_two_dimensions(self, calibrated_spec2):
        grid = Grid.from_radius(2, 0.1, 3.0)
        scan = density_scan(constant_field(grid, 1.0), calibrated_spec2, (0.0, 0.0), [0.25, 0.5, 1.0])
        for ratio in scan.lhs_over_rn:
            assert ratio == pytest.approx(math.pi, rel=1e-2)
        assert scan.fitted_exponent == pytest.approx(2.0, abs=0.02)

    def test_band_weight(self, line, calibrated_spec2):
        scan = density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), [0.5, 1.0, 2.0])
        assert scan.band_weight == pytest.approx(calibrated_spec2.q ** -2.0)

    def test_step_counts_the_plus_phase(self, step, calibrated_spec2):
        scan = density_scan(step, calibrated_spec2, (0.0, 0.0), [1.0, 2.0, 2.5])
        assert scan.V_values == pytest.approx([0.875, 1.875, 2.375])
        assert scan.c_tilde_hat == pytest.approx(0.875)

    def test_seed_condition(self, line, calibrated_spec2):
        with pytest.raises(SeedConditionError):
            density_scan(constant_field(line, -1.0), calibrated_spec2, (0.0, 0.0), [0.5, 1.0, 2.0])

    def test_seed_must_beat_c0(self, step, calibrated_spec2):
        with pytest.raises(SeedConditionError):
            density_scan(step, calibrated_spec2, (0.0, 0.0), [1.0, 2.0, 2.5], c0=1.0)

    def test_three_r_ball_inside_omega(self, line, calibrated_spec2):
        with pytest.raises(DomainError, match="B_3r"):
            density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), [1.0, 2.0, 3.0])

    def test_stable_variant_needs_four_r(self, line, calibrated_spec2):
        with pytest.raises(DomainError, match="B_4r"):
            density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), [0.5, 1.0, 2.5], stable=True)

    @pytest.mark.parametrize("radii", [[], [2.0, 1.0, 0.5], [0.0, 1.0, 2.0]])
    def test_bad_radii(self, line, calibrated_spec2, radii):
        with pytest.raises(InputError):
            density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), radii)

    def test_frame(self, line, calibrated_spec2):
        scan = density_scan(constant_field(line, 1.0), calibrated_spec2, (0.0, 0.0), [0.5, 1.0, 2.0])
        frame = density_frame(scan)
        assert frame.columns == DENSITY_COLUMNS
        assert frame.height == 3


class TestFullDensityScan:
    def test_bounds_follow_the_regime_formula(self, step, calibrated_spec2, sub_params):
        radii = [1.0, 2.0, 2.5]
        scan = full_density_scan(step, calibrated_spec2, radii, params=sub_params)
        assert scan.lhs_values == scan.V_values
        # lambda at theta = 0 is 1 for the unscaled (1 - x^2)^2
        expected = [regime_bound(r, 0.25, 2.0, 1).value for r in radii]
        assert scan.energy_bounds == pytest.approx(expected)
        assert len(scan.band_bounds) == 3
        for integral, bound in zip(scan.interface_values, scan.band_bounds):
            assert integral <= bound

    def test_ceiling_is_the_ball_volume(self, line, calibrated_spec2):
        scan = full_density_scan(constant_field(line, 1.0), calibrated_spec2, [0.5, 1.0, 2.0])
        assert scan.sup_bound_ok
        assert scan.band_bounds is None


@pytest.mark.slow
@pytest.mark.parametrize("m", [2.0, 3.0])
def test_minimizer_density_acceptance(m):
    cfg = ExperimentConfig(
        experiment=ExperimentKind.DENSITY_SCAN, n=1, s=0.75, p=2.0, m=m,
        normalization=Normalization.APPENDIX, scale=128.0, c=0.5,
        h=0.25, box_radius=64.0, radii=[2.0, 4.0, 8.0, 16.0],
    )
    _, report = run_density_scan(cfg)
    assert report.fitted_exponents["r"] == pytest.approx(1.0, abs=0.1)
    assert report.metrics["c_tilde_hat"] > 0.05
    assert report.passed
