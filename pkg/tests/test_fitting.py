import numpy as np
import pytest

from phaselab.analysis.fitting import fit_exponent
from phaselab.errors import InputError


def test_recovers_power_law():
    xs = [1.0, 2.0, 4.0, 8.0, 16.0]
    slope, intercept, r2 = fit_exponent(xs, [3.0 * x ** 0.75 for x in xs])
    assert slope == pytest.approx(0.75)
    assert np.exp(intercept) == pytest.approx(3.0)
    assert r2 == pytest.approx(1.0)


def test_constant_data_has_zero_slope():
    slope, _, r2 = fit_exponent([1.0, 2.0, 4.0], [5.0, 5.0, 5.0])
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert r2 == 1.0


def test_noisy_data_lowers_r2():
    xs = [1.0, 2.0, 4.0, 8.0]
    _, _, r2 = fit_exponent(xs, [1.0, 3.0, 2.0, 9.0])
    assert r2 < 1.0


@pytest.mark.parametrize("xs,ys", [
    ([1.0, 2.0], [1.0, 2.0]),
    ([1.0, 2.0, 3.0], [1.0, 2.0]),
    ([1.0, -2.0, 3.0], [1.0, 2.0, 3.0]),
    ([1.0, 2.0, 3.0], [1.0, 0.0, 3.0]),
    ([1.0, 2.0, 3.0], [1.0, float("inf"), 3.0]),
])
def test_rejects_bad_input(xs, ys):
    with pytest.raises(InputError):
        fit_exponent(xs, ys)
