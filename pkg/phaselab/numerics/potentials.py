import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np
import sympy as spy
from scipy.optimize import brentq

from phaselab.config import settings
from phaselab.errors import CalibrationError, ConfigError, DomainError, InputError
from phaselab.models import Normalization, PotentialSpec, normalization_factor, order_k

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_X = spy.Symbol("x")


class ZeroPotential:
    """W == 0, for purely kinetic experiments"""

    def value(self, x: ArrayLike) -> ArrayLike:
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def derivative(self, x: ArrayLike) -> ArrayLike:
        return self.value(x)


def _check_range(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0):
        raise DomainError(f"potential evaluated outside [-1, 1] (max |x| = {np.max(np.abs(arr))})")
    return arr


def eval_potential(spec: PotentialSpec, x: ArrayLike) -> ArrayLike:
    """
    Evaluate W(x) = scale * (1 - x^2)^m, divided by 2m under the Intro normalization.

    Args:
        spec: Potential parameters (a plug-in hook takes precedence)
        x: Point or array in [-1, 1]

    Returns:
        W(x), same shape as x
    """
    arr = _check_range(x)
    if spec.hook is not None:
        return spec.hook.value(x)
    out = spec.norm * (1.0 - arr * arr) ** spec.m
    return float(out) if np.ndim(x) == 0 else out


def potential_derivative(spec: PotentialSpec, x: ArrayLike) -> ArrayLike:
    arr = _check_range(x)
    if spec.hook is not None:
        return spec.hook.derivative(x)
    out = -2.0 * spec.m * spec.norm * arr * (1.0 - arr * arr) ** (spec.m - 1.0)
    return float(out) if np.ndim(x) == 0 else out


def default_spec(
    m: float,
    normalization: Normalization = Normalization.INTRO,
    scale: float = 1.0,
    c: Optional[float] = None,
) -> PotentialSpec:
    """Prototype W_m with default sandwich constants, optionally calibrated at level c"""
    if c is None:
        return PotentialSpec(m=m, normalization=normalization, scale=scale)
    c1, q = calibrate_c1_q(m, c, normalization=normalization, scale=scale)
    return PotentialSpec(m=m, normalization=normalization, scale=scale, c1=c1, q=q)


def rescaled_spec(spec: PotentialSpec, r: float, s: float, p: float) -> PotentialSpec:
    """Potential of the blow-down u_r(x) = u(rx): W is multiplied by r^(sp)"""
    factor = r ** (s * p)
    data = spec.model_dump(exclude={"lam", "Lam"})
    data["scale"] = spec.scale * factor
    if spec.c1 is not None:
        data["c1"] = spec.c1 * factor
    data["hook"] = spec.hook
    return PotentialSpec(**data)


def lambda_mu(spec: PotentialSpec, mu: float) -> float:
    """Constant with lambda_mu * 1_(x <= mu) * |1 + x|^m <= W(x)"""
    if not -1.0 < mu < 1.0:
        raise DomainError(f"mu must lie in (-1, 1), got {mu}")
    return spec.norm * (1.0 - mu) ** spec.m


def check_sandwich(spec: PotentialSpec, samples: int = 1000) -> float:
    """Worst slack of lambda 1_(x <= theta)|1+x|^m <= W(x) <= Lambda |1+x|^m on a grid"""
    xs = np.linspace(-1.0, 1.0, samples)
    w = eval_potential(spec, xs)
    growth = np.abs(1.0 + xs) ** spec.m
    lower = w - spec.lam * (xs <= spec.theta) * growth
    upper = spec.Lam * growth - w
    return float(min(lower.min(), upper.min()))


# ---------------------------------------------------------------------------
# Recursive polynomials P_m^k
# ---------------------------------------------------------------------------

class RecursivePolynomial:
    """P_m^k with exact rational coefficients"""

    def __init__(self, m: float, k: int, poly: spy.Poly):
        self.m = m
        self.k = k
        self.poly = poly

    @property
    def coefficients(self) -> List[spy.Rational]:
        """Coefficients from the constant term up"""
        return list(reversed(self.poly.all_coeffs()))

    @property
    def degree(self) -> int:
        return self.poly.degree()

    def __call__(self, x: ArrayLike) -> ArrayLike:
        coeffs = [float(c) for c in self.poly.all_coeffs()]
        return np.polyval(coeffs, x)

    def derivative(self) -> spy.Poly:
        return self.poly.diff(_X)

    def __repr__(self) -> str:
        return f"RecursivePolynomial(m={self.m}, k={self.k}, {self.poly.as_expr()})"


def _rational(m: float) -> spy.Rational:
    return spy.Rational(str(m))


def _first_order(m_rat: spy.Rational) -> spy.Poly:
    return spy.Poly(-2 * m_rat * _X, _X, domain="QQ")


@lru_cache(maxsize=64)
def _polynomial_chain(m: float, top: int) -> Tuple[spy.Poly, ...]:
    m_rat = _rational(m)
    one_minus_x2 = spy.Poly(1 - _X ** 2, _X, domain="QQ")
    chain = [_first_order(m_rat)]
    for k in range(2, top + 1):
        prev = chain[-1]
        chain.append(_first_order(m_rat - k + 1) * prev + one_minus_x2 * prev.diff(_X))
    return tuple(chain)


def recursive_polynomial(m: float, k: int) -> RecursivePolynomial:
    if m <= 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    if not 1 <= k <= math.floor(m):
        raise DomainError(f"order k={k} outside 1..{math.floor(m)} for m={m}")
    return RecursivePolynomial(m, k, _polynomial_chain(float(m), k)[k - 1])


def eval_P(m: float, k: int, x: ArrayLike) -> ArrayLike:
    """Value of P_m^k at x in [-1, 1]"""
    poly = recursive_polynomial(m, k)
    _check_range(x)
    return poly(x)


def recursion_holds(m: float, k: int) -> bool:
    """Coefficient-level check of P^k = P^1_(m-k+1) P^(k-1) + (1 - x^2) P^(k-1)'"""
    current = recursive_polynomial(m, k).poly
    if k == 1:
        return current == _first_order(_rational(m))
    prev = recursive_polynomial(m, k - 1).poly
    rebuilt = _first_order(_rational(m) - k + 1) * prev + spy.Poly(1 - _X ** 2, _X) * prev.diff(_X)
    return (current - rebuilt).is_zero


def identity_holds_symbolically(m: float, k: int) -> bool:
    """Exact check of W_m^(k) = W_(m-k) P_m^k for rational m"""
    m_rat = _rational(m)
    lhs = spy.diff((1 - _X ** 2) ** m_rat, _X, k)
    rhs = (1 - _X ** 2) ** (m_rat - k) * recursive_polynomial(m, k).poly.as_expr()
    return spy.simplify((lhs - rhs) / (1 - _X ** 2) ** (m_rat - k)) == 0


@lru_cache(maxsize=16)
def central_weights(k: int, order: int) -> Tuple[Tuple[int, ...], Tuple[spy.Rational, ...]]:
    """Exact central finite-difference weights for the k-th derivative"""
    half = (k + 1) // 2 + order // 2 - 1
    offsets = list(range(-half, half + 1))
    size = len(offsets)
    system = spy.Matrix(size, size, lambda q, j: spy.Rational(offsets[j]) ** q)
    rhs = spy.zeros(size, 1)
    rhs[k] = spy.factorial(k)
    weights = system.LUsolve(rhs)
    return tuple(offsets), tuple(weights)


def _longdouble(value: spy.Rational) -> np.longdouble:
    p, q = spy.fraction(spy.Rational(value))
    return np.longdouble(int(p)) / np.longdouble(int(q))


def check_derivative_identity(m: float, k: int, xs: np.ndarray) -> float:
    """
    Max over xs of |D^k W_m - W_(m-k) P_m^k| in the Appendix normalization.

    D^k is a central difference of order settings.FD_ORDER with step
    settings.FD_STEP, evaluated in extended precision; points whose
    stencil comes within settings.FD_ENDPOINT_GUARD steps of +-1 are skipped.
    """
    poly = recursive_polynomial(m, k)
    offsets, weights = central_weights(k, settings.FD_ORDER)
    h = np.longdouble(settings.FD_STEP)
    reach = (max(offsets) + settings.FD_ENDPOINT_GUARD) * settings.FD_STEP

    xs = np.asarray(xs, dtype=float)
    xs = xs[np.abs(xs) <= 1.0 - reach]
    if xs.size == 0:
        raise InputError("no sample point is far enough from the endpoints for the stencil")

    x = xs.astype(np.longdouble)
    m_ld = _longdouble(_rational(m))
    lhs = np.zeros_like(x)
    for offset, weight in zip(offsets, weights):
        xo = x + offset * h
        lhs += _longdouble(weight) * (1 - xo * xo) ** m_ld
    lhs /= h ** k

    coeffs = [_longdouble(c) for c in poly.poly.all_coeffs()]
    p_val = np.zeros_like(x)
    for c in coeffs:
        p_val = p_val * x + c
    rhs = (1 - x * x) ** (m_ld - k) * p_val

    residual = float(np.max(np.abs(lhs - rhs)))
    logger.debug(f"Derivative identity m={m} k={k}: residual {residual:.3e} over {xs.size} points")
    return residual


# ---------------------------------------------------------------------------
# Well condition near -1
# ---------------------------------------------------------------------------

def check_well_condition(spec: PotentialSpec, samples: int) -> Tuple[bool, float]:
    """
    Check W(t) - W(r) >= c1 (t-r)|1+r|^(m-1) + c1 (t-r)^k on -1 <= r <= t <= -1 + q.

    Returns:
        (holds, minimum slack over the sampled triangle)
    """
    if samples < 2:
        raise InputError(f"need at least 2 samples, got {samples}")
    if spec.c1 is None or spec.q is None:
        raise ConfigError("well condition needs both c1 and q")
    if spec.q >= 1.0:
        raise ConfigError(f"q must be < 1, got {spec.q}")

    grid = np.linspace(-1.0, -1.0 + spec.q, samples)
    r, t = np.meshgrid(grid, grid, indexing="ij")
    upper = r <= t
    r, t = r[upper], t[upper]
    gap = t - r
    slack = (
        eval_potential(spec, t) - eval_potential(spec, r)
        - spec.c1 * gap * np.abs(1.0 + r) ** (spec.m - 1.0)
        - spec.c1 * gap ** spec.k
    )
    worst = float(slack.min())
    holds = worst >= -settings.WELL_SLACK_TOL
    if not holds:
        logger.warning(f"Well condition violated for m={spec.m}: worst slack {worst:.3e}")
    return holds, worst


def _fractional_derivative(m: float, xs: np.ndarray) -> np.ndarray:
    """W_m^(floor(m)+1) on (-1, 1) in the Appendix normalization"""
    top = math.floor(m)
    beta = m - top
    poly = recursive_polynomial(m, top)
    p_val = poly(xs)
    dp_val = np.polyval([float(c) for c in poly.derivative().all_coeffs()], xs)
    base = 1.0 - xs * xs
    return -2.0 * xs * beta * base ** (beta - 1.0) * p_val + base ** beta * dp_val


def _calibration_feasible(m: float, c: float, q: float) -> bool:
    xs = np.linspace(-1.0, -1.0 + q, settings.CALIBRATION_SAMPLES)
    for k in range(1, math.floor(m) + 1):
        if eval_P(m, k, xs).min() < c:
            return False
    if not float(m).is_integer():
        if _fractional_derivative(m, xs[1:]).min() < c:
            return False
    return True


def calibrate_c1_q(
    m: float,
    c: float,
    normalization: Normalization = Normalization.APPENDIX,
    scale: float = 1.0,
) -> Tuple[float, float]:
    """
    Largest dyadic q with every P_m^k >= c on [-1, -1 + q], and the matching c1.

    Args:
        m: Growth exponent (> 1)
        c: Target lower level in (0, 1)
        normalization: Normalization the returned c1 refers to
        scale: Amplitude of W the returned c1 refers to

    Returns:
        (c1, q) with c1 = min{c (2 - q)^(m-1), c / k!} rescaled to the normalization
    """
    if m <= 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    if not 0.0 < c < 1.0:
        raise DomainError(f"c must lie in (0, 1), got {c}")

    lo, hi = 0.0, 1.0
    for _ in range(settings.CALIBRATION_FLOOR_EXP):
        mid = 0.5 * (lo + hi)
        if _calibration_feasible(m, c, mid):
            lo = mid
        else:
            hi = mid
    if lo < 2.0 ** (-settings.CALIBRATION_FLOOR_EXP):
        raise CalibrationError(f"no q above 2^-{settings.CALIBRATION_FLOOR_EXP} found for m={m}, c={c}")

    k = order_k(m)
    c1 = min(c * (2.0 - lo) ** (m - 1.0), c / math.factorial(k))
    c1 *= normalization_factor(m, normalization) * scale
    logger.info(f"Calibrated m={m}, c={c}: q={lo:.6f}, c1={c1:.6f}")
    return c1, lo


def _sup_derivative(poly: spy.Poly) -> float:
    """||P'|| on [-1, 0]"""
    dp = [float(c) for c in poly.diff(_X).all_coeffs()]
    candidates = [-1.0, 0.0]
    if len(dp) > 2:
        for root in np.roots(np.polyder(dp)):
            if abs(root.imag) < 1e-12 and -1.0 <= root.real <= 0.0:
                candidates.append(float(root.real))
    return max(abs(float(np.polyval(dp, x))) for x in candidates)


def analytic_q(m: float, c: float) -> float:
    """Explicit recursive choice of q guaranteeing P_m^k >= c near -1"""
    if not 0.0 < c < 1.0:
        raise DomainError(f"c must lie in (0, 1), got {c}")
    top = math.floor(m)
    q = 1.0 - c / (2.0 * m)
    for k in range(2, top + 1):
        sup = _sup_derivative(recursive_polynomial(m, k - 1).poly)
        a = 2.0 * c * (m - k + 1)
        q = min(q, (a - c) / (a + 2.0 * sup))

    if not float(m).is_integer():
        beta = m - top
        sup = _sup_derivative(recursive_polynomial(m, top).poly)

        def balance(t: float) -> float:
            return 2.0 * c * (1.0 - t) * beta * (2.0 * t) ** (beta - 1.0) - c - (2.0 * t) ** beta * sup

        q = min(q, brentq(balance, 1e-12, 1.0))
    return q
