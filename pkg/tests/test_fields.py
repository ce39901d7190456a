import math

import numpy as np
import pytest
from pydantic import ValidationError

from phaselab.errors import DomainError, InputError
from phaselab.models import EnergyParams, Grid
from phaselab.numerics.energy import full_seminorm
from phaselab.numerics.fields import (
    ConstantProfile,
    CosBumpProfile,
    Exterior,
    ExteriorKind,
    Field,
    IndicatorProfile,
    LogBumpProfile,
    ball_mask,
    ball_weights,
    constant_field,
    interface_integral,
    level_set_report,
    level_set_volume,
    make_field,
    parse_profile,
    read_field,
    rescale_field,
    symmetric_decreasing_rearrangement,
    write_field,
)

from .conftest import random_field


class TestGrid:
    def test_from_radius(self):
        grid = Grid.from_radius(1, 0.25, 2.0)
        assert grid.cell_count == 17
        assert grid.half == 8
        assert grid.box_radius == pytest.approx(2.0)
        assert grid.cell_volume == 0.25

    def test_even_cell_count_rejected(self):
        with pytest.raises(ValidationError):
            Grid(n=1, h=0.1, cell_count=10)

    def test_ball_mask_uses_strict_inequality(self):
        grid = Grid.from_radius(1, 0.25, 2.0)
        assert np.count_nonzero(ball_mask(grid, 1.0)) == 7

    def test_ball_weights_are_exact_in_1d(self):
        grid = Grid.from_radius(1, 0.25, 2.0)
        assert np.sum(ball_weights(grid, 1.1)) * grid.h == pytest.approx(2.2)

    def test_ball_weights_approximate_disc_area(self):
        grid = Grid.from_radius(2, 0.1, 2.0)
        area = np.sum(ball_weights(grid, 1.5)) * grid.cell_volume
        assert area == pytest.approx(math.pi * 1.5 ** 2, rel=1e-3)


class TestField:
    def test_values_are_read_only(self, grid_1d):
        u = constant_field(grid_1d, 0.5)
        with pytest.raises(ValueError):
            u.values[0] = 0.0

    def test_nan_rejected(self, grid_1d):
        values = np.zeros(grid_1d.cell_count)
        values[3] = np.nan
        with pytest.raises(InputError):
            Field(grid_1d, values, Exterior.constant(0.0))

    def test_out_of_range_rejected(self, grid_1d):
        with pytest.raises(InputError):
            Field(grid_1d, np.full(grid_1d.cell_count, 1.5), Exterior.constant(1.0))

    def test_make_field_clamps_and_counts(self, grid_1d):
        u = make_field(grid_1d, lambda x: 2.0 * x[:, 0], Exterior.constant(0.0))
        assert u.values.max() == 1.0
        assert u.clamp_count == 30

    def test_plain_callable_needs_exterior(self, grid_1d):
        with pytest.raises(InputError):
            make_field(grid_1d, lambda x: x[:, 0])

    def test_default_exterior_is_constant_when_profile_settles(self, grid_1d):
        u = make_field(grid_1d, IndicatorProfile(0.5))
        assert u.exterior.is_constant
        assert u.exterior.left == -1.0

    def test_default_exterior_follows_profile_beyond_box(self):
        grid = Grid.from_radius(1, 0.1, 0.5)
        u = make_field(grid, CosBumpProfile())
        assert u.exterior.kind == ExteriorKind.PROFILE
        assert u.exterior.evaluate(np.array([[0.8]]))[0] == pytest.approx(math.cos(0.4 * math.pi) ** 2)

    def test_log_bump_plateau(self, grid_1d):
        u = make_field(grid_1d, LogBumpProfile())
        centre = grid_1d.half
        assert u.values[centre] == 1.0
        assert u.values[0] == -1.0

    def test_refined_halves_the_step(self, grid_1d):
        u = make_field(grid_1d, IndicatorProfile(0.5))
        fine = u.refined()
        assert fine.grid.h == pytest.approx(grid_1d.h / 2)
        assert fine.grid.box_radius == pytest.approx(grid_1d.box_radius)

    def test_refined_needs_profile(self, grid_1d):
        u = constant_field(grid_1d, 0.0).with_values(np.zeros(grid_1d.cell_count))
        with pytest.raises(InputError):
            u.refined()


class TestDescriptions:
    def test_profile_round_trip(self):
        profile = IndicatorProfile(0.25, length=2.0)
        parsed = parse_profile(profile.describe())
        assert isinstance(parsed, IndicatorProfile)
        assert parsed.params() == profile.params()

    def test_unknown_profile(self):
        with pytest.raises(InputError):
            parse_profile("spiral(turns=3)")

    @pytest.mark.parametrize("exterior", [
        Exterior.constant(-1.0),
        Exterior.two_phase(),
        Exterior.from_profile(CosBumpProfile(length=2.0)),
    ])
    def test_exterior_round_trip(self, exterior):
        assert Exterior.parse(exterior.describe()).matches(exterior)

    def test_sign_exterior_values(self):
        values = Exterior.two_phase().evaluate(np.array([[-3.0], [3.0]]))
        assert list(values) == [-1.0, 1.0]


class TestLevelSets:
    def test_volume_of_full_phase(self, grid_1d):
        u = constant_field(grid_1d, 1.0)
        assert level_set_volume(u, 0.0, 1.3) == pytest.approx(2.6)

    def test_report(self, grid_1d):
        u = make_field(grid_1d, IndicatorProfile(0.55))
        report = level_set_report(u, 0.0, [0.3, 1.0])
        assert report.volumes[0] == pytest.approx(0.6)
        assert report.volumes[1] == pytest.approx(1.1)

    def test_radius_beyond_box(self, grid_1d):
        with pytest.raises(DomainError):
            level_set_volume(constant_field(grid_1d, 1.0), 0.0, 3.0)

    def test_interface_integral_counts_the_band(self, grid_1d):
        u = constant_field(grid_1d, -0.5)
        value = interface_integral(u, -0.8, -0.2, 1.0, 2.0)
        assert value == pytest.approx(0.25 * 2.0)

    def test_interface_band_excludes_outside_values(self, grid_1d):
        assert interface_integral(constant_field(grid_1d, 0.5), -0.8, 0.0, 1.0, 2.0) == 0.0

    def test_bad_band(self, grid_1d):
        with pytest.raises(DomainError):
            interface_integral(constant_field(grid_1d, 0.0), 0.5, 0.1, 1.0, 2.0)

    def test_rescaling_scales_volumes(self):
        grid = Grid.from_radius(1, 0.25, 8.0)
        u = make_field(grid, IndicatorProfile(1.6))
        r = 4.0
        u_r = rescale_field(u, r)
        for radius in (1.0, 2.0, 6.0):
            assert level_set_volume(u_r, 0.0, radius / r) == pytest.approx(level_set_volume(u, 0.0, radius) / r)

    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("seed", range(5))
    def test_volume_grows_with_radius_and_shrinks_with_threshold(self, n, seed):
        grid = Grid.from_radius(n, 0.25, 3.0)
        u = random_field(grid, 2.5, seed=seed, spread=1.0)
        radii = [0.3, 0.8, 1.25, 2.0, 2.9]
        thresholds = [-0.9, -0.4, 0.0, 0.3, 0.8]
        for theta in thresholds:
            volumes = [level_set_volume(u, theta, r) for r in radii]
            assert all(b >= a - 1e-12 for a, b in zip(volumes, volumes[1:]))
        for r in radii:
            volumes = [level_set_volume(u, theta, r) for theta in thresholds]
            assert all(b <= a + 1e-12 for a, b in zip(volumes, volumes[1:]))


class TestRearrangement:
    def test_equimeasurable_and_radially_nonincreasing(self):
        grid = Grid.from_radius(1, 0.25, 4.0)
        u = random_field(grid, 2.0, seed=3, spread=1.0)
        star = symmetric_decreasing_rearrangement(u)
        np.testing.assert_array_equal(np.sort(star.values), np.sort(u.values))
        radius = np.abs(np.arange(-grid.half, grid.half + 1))
        order = np.argsort(radius, kind="stable")
        assert np.all(np.diff(star.values[order]) <= 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_seminorm_does_not_increase(self, seed):
        grid = Grid.from_radius(1, 0.25, 4.0)
        params = EnergyParams(s=0.25, p=2.0, n=1)
        u = random_field(grid, 2.0, seed=seed, spread=1.0)
        star = symmetric_decreasing_rearrangement(u)
        assert full_seminorm(star, params) <= 1.01 * full_seminorm(u, params)

    def test_two_dimensional_field(self):
        grid = Grid.from_radius(2, 0.25, 2.0)
        params = EnergyParams(s=0.3, p=2.0, n=2)
        u = random_field(grid, 1.0, seed=7, spread=1.0)
        star = symmetric_decreasing_rearrangement(u)
        assert level_set_volume(star, 0.0, 2.0) == pytest.approx(level_set_volume(u, 0.0, 2.0))
        assert full_seminorm(star, params) <= 1.01 * full_seminorm(u, params)

    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("seed", range(5))
    def test_rearranging_twice_changes_nothing(self, n, seed):
        grid = Grid.from_radius(n, 0.25, 2.0)
        star = symmetric_decreasing_rearrangement(random_field(grid, 1.5, seed=seed, spread=1.0))
        np.testing.assert_array_equal(symmetric_decreasing_rearrangement(star).values, star.values)

    def test_support_touching_boundary(self, grid_1d):
        with pytest.raises(DomainError):
            symmetric_decreasing_rearrangement(random_field(grid_1d, 5.0, seed=1))

    def test_needs_constant_exterior(self, grid_1d):
        with pytest.raises(DomainError):
            symmetric_decreasing_rearrangement(make_field(grid_1d, ConstantProfile(0.0), Exterior.two_phase()))


class TestFieldFiles:
    def test_bit_exact_round_trip(self, tmp_path):
        grid = Grid.from_radius(2, 0.1, 0.5)
        u = random_field(grid, 0.4, seed=11)
        path = tmp_path / "field.txt"
        write_field(u, path)
        back = read_field(path)
        assert back.grid == grid
        np.testing.assert_array_equal(back.values, u.values)
        assert back.exterior.matches(u.exterior)

    def test_profile_exterior_round_trip(self, tmp_path):
        grid = Grid.from_radius(1, 0.1, 0.5)
        u = make_field(grid, CosBumpProfile())
        path = tmp_path / "bump.txt"
        write_field(u, path)
        assert read_field(path).exterior.matches(u.exterior)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.txt"
        path.write_text("1 0.1 1.0 const:-1.0\n0 zero\n")
        with pytest.raises(InputError):
            read_field(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "field.txt"
        write_field(random_field(Grid.from_radius(1, 0.1, 1.0), 0.5, seed=2), path)
        path.write_text("\n".join(path.read_text().splitlines()[:5]) + "\n")
        with pytest.raises(InputError, match="missing 17 of 21 cells"):
            read_field(path)

    @pytest.mark.parametrize("body,fragment", [
        ("0 -1.0\n0 -1.0\n1 -1.0\n", "index 0 repeated"),
        ("0 -1.0\n1 -1.0\n3 -1.0\n", "index 3 outside"),
        ("0 -1.0\n-1 -1.0\n2 -1.0\n", "index -1 outside"),
    ])
    def test_bad_indices(self, tmp_path, body, fragment):
        path = tmp_path / "field.txt"
        path.write_text("1 0.5 0.5 const:-1.0\n" + body)
        with pytest.raises(InputError, match=fragment):
            read_field(path)
