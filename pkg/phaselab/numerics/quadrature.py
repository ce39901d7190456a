import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, roots_legendre

from phaselab.config import settings
from phaselab.errors import DomainError
from phaselab.models import EnergyParams, Regime

logger = logging.getLogger(__name__)

_SERIES_OFFSET_1D = 16
_GL_NODES = 24


def sphere_area(n: int) -> float:
    """|dB_1| in dimension n"""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


def knp_closed_form(n: int, p: float) -> float:
    return 2.0 * math.pi ** ((n - 1) / 2.0) * gamma((p + 1.0) / 2.0) / gamma((n + p) / 2.0)


def knp_constant(n: int, p: float) -> float:
    """
    K_{n,p} = int over the unit sphere of |omega . e_1|^p.

    n = 1 is exact; n = 2 integrates |cos|^p over the circle and is
    cross-checked against the Gamma-function closed form.
    """
    if n == 1:
        return 2.0
    if n != 2:
        return knp_closed_form(n, p)

    value, _ = quad(
        lambda t: abs(math.cos(t)) ** p, 0.0, 2.0 * math.pi,
        points=[math.pi / 2.0, 1.5 * math.pi], epsrel=settings.QUAD_EPSREL, limit=200,
    )
    closed = knp_closed_form(n, p)
    if abs(value - closed) > 1e-8 * closed:
        logger.warning(f"K_(2,{p}) quadrature {value} disagrees with closed form {closed}")
    return value


# ---------------------------------------------------------------------------
# Cell-pair integrals of |x - y|^a over unit cells at integer offset d
# ---------------------------------------------------------------------------

def tent_integral_1d(d: np.ndarray, a: float) -> np.ndarray:
    """int_{[0,1]} int_{[d,d+1]} |x - y|^a dy dx for integer offsets d"""
    d = np.abs(np.asarray(d, dtype=float))
    out = np.empty_like(d)

    near = d < _SERIES_OFFSET_1D
    dn = d[near]

    def antiderivative(z):
        return np.abs(z) ** (a + 2.0) / ((a + 1.0) * (a + 2.0))

    out[near] = antiderivative(dn + 1.0) - 2.0 * antiderivative(dn) + antiderivative(dn - 1.0)

    # second differences cancel badly far out; the tent moments give the series instead
    df = d[~near]
    c2 = a * (a - 1.0) / 12.0
    c4 = a * (a - 1.0) * (a - 2.0) * (a - 3.0) / 360.0
    c6 = float(np.prod([a - j for j in range(6)])) / 720.0 / 28.0
    out[~near] = df ** a * (1.0 + c2 / df ** 2 + c4 / df ** 4 + c6 / df ** 6)
    return out


def _tent_factor(lo: float, d: float) -> Tuple[float, float]:
    """Coefficients (A, B) with 1 - |z - d| = A + B z on the unit interval [lo, lo + 1]"""
    if lo + 0.5 < d:
        return 1.0 - d, 1.0
    return 1.0 + d, -1.0


@lru_cache(maxsize=4)
def _legendre(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(nodes)


def _square_gauss(x0: float, y0: float, d1: float, d2: float, a: float) -> float:
    nodes, weights = _legendre(_GL_NODES)
    z1 = x0 + 0.5 * (nodes + 1.0)
    z2 = y0 + 0.5 * (nodes + 1.0)
    Z1, Z2 = np.meshgrid(z1, z2, indexing="ij")
    integrand = (1.0 - np.abs(Z1 - d1)) * (1.0 - np.abs(Z2 - d2)) * np.hypot(Z1, Z2) ** a
    return 0.25 * float(weights @ integrand @ weights)


def _square_polar(x0: float, y0: float, d1: float, d2: float, a: float) -> float:
    """Unit square with the origin at a corner: exact radial integration, quad in angle"""
    sx = 1.0 if x0 == 0.0 else -1.0
    sy = 1.0 if y0 == 0.0 else -1.0
    A1, B1 = _tent_factor(x0, d1)
    A2, B2 = _tent_factor(y0, d2)

    c0 = A1 * A2
    c1x, c1y = A2 * B1 * sx, A1 * B2 * sy
    c2 = B1 * B2 * sx * sy
    for coeff, power in ((c0, a + 2.0), (abs(c1x) + abs(c1y), a + 3.0), (c2, a + 4.0)):
        if coeff != 0.0 and power <= 0.0:
            raise DomainError(f"kernel exponent {a} is not integrable on a corner cell")

    def radial(phi: float) -> float:
        cos, sin = math.cos(phi), math.sin(phi)
        reach = 1.0 / max(cos, sin)
        total = 0.0
        if c0 != 0.0:
            total += c0 * reach ** (a + 2.0) / (a + 2.0)
        lin = c1x * cos + c1y * sin
        if lin != 0.0:
            total += lin * reach ** (a + 3.0) / (a + 3.0)
        if c2 != 0.0:
            total += c2 * cos * sin * reach ** (a + 4.0) / (a + 4.0)
        return total

    lower, _ = quad(radial, 0.0, math.pi / 4.0, epsrel=settings.QUAD_EPSREL, limit=200)
    upper, _ = quad(radial, math.pi / 4.0, math.pi / 2.0, epsrel=settings.QUAD_EPSREL, limit=200)
    return lower + upper


def tent_integral_2d(d1: int, d2: int, a: float) -> float:
    """int over unit squares at offset (d1, d2) of |x - y|^a"""
    d1, d2 = float(abs(d1)), float(abs(d2))
    total = 0.0
    for x0 in (d1 - 1.0, d1):
        for y0 in (d2 - 1.0, d2):
            if x0 in (-1.0, 0.0) and y0 in (-1.0, 0.0):
                total += _square_polar(x0, y0, d1, d2, a)
            else:
                total += _square_gauss(x0, y0, d1, d2, a)
    return total


def _tent_series_2d(dist: np.ndarray, a: float) -> np.ndarray:
    return dist ** a * (1.0 + a * a / (12.0 * dist ** 2))


@lru_cache(maxsize=16)
def offset_table(n: int, a: float, max_offset: int) -> np.ndarray:
    """
    J(d, a) for |d_i| <= max_offset, indexed by absolute offsets.

    Entry 0 (the self pair) is left at 0 when |x - y|^a is not integrable there.
    """
    if n == 1:
        d = np.arange(max_offset + 1)
        table = np.zeros(max_offset + 1)
        table[1:] = tent_integral_1d(d[1:], a)
        if a > -1.0:
            table[0] = tent_integral_1d(np.zeros(1), a)[0]
        table.flags.writeable = False
        return table

    near = settings.NEAR_FIELD_RADIUS
    idx = np.arange(max_offset + 1, dtype=float)
    D1, D2 = np.meshgrid(idx, idx, indexing="ij")
    dist = np.hypot(D1, D2)
    table = np.zeros_like(dist)
    far = dist >= near
    table[far] = _tent_series_2d(dist[far], a)
    for i in range(min(near, max_offset + 1)):
        for j in range(i, min(near, max_offset + 1)):
            if (i, j) == (0, 0) and a <= -2.0:
                continue
            if dist[i, j] >= near:
                continue
            table[i, j] = table[j, i] = tent_integral_2d(i, j, a)
    logger.debug(f"Built {n}D offset table a={a:.4f} size={table.shape}")
    table.flags.writeable = False
    return table


# ---------------------------------------------------------------------------
# Tails and interaction functional
# ---------------------------------------------------------------------------

def exterior_kernel_mass(rho: float, T: float, sigma: float, n: int) -> float:
    """
    int over |y| > T of |x - y|^(-n - sigma) dy for |x| = rho < T.

    Args:
        rho: Distance of x from the origin
        T: Radius of the excluded ball
        sigma: Kernel order s*p
        n: Dimension

    Returns:
        The tail mass (closed form in 1D, arc-measure quadrature in 2D)
    """
    if rho >= T:
        raise DomainError(f"point at distance {rho} is not inside B_{T}")
    if n == 1:
        return ((T - rho) ** (-sigma) + (T + rho) ** (-sigma)) / sigma
    if rho == 0.0:
        return 2.0 * math.pi * T ** (-sigma) / sigma

    def arc(t: float) -> float:
        c = (T * T - rho * rho - t * t) / (2.0 * rho * t)
        return t ** (-1.0 - sigma) * 2.0 * math.acos(min(1.0, max(-1.0, c)))

    inner, _ = quad(arc, T - rho, T + rho, epsrel=settings.QUAD_EPSREL, limit=200)
    return inner + 2.0 * math.pi * (T + rho) ** (-sigma) / sigma


def cell_tail_mass_1d(x_lo: np.ndarray, x_hi: np.ndarray, T: float, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Exact int over [x_lo, x_hi] of the left (y < -T) and right (y > T) tail masses"""
    if math.isclose(sigma, 1.0):
        right = np.log((T - x_lo) / (T - x_hi))
        left = np.log((T + x_hi) / (T + x_lo))
    else:
        norm = sigma * (1.0 - sigma)
        right = ((T - x_lo) ** (1.0 - sigma) - (T - x_hi) ** (1.0 - sigma)) / norm
        left = ((T + x_hi) ** (1.0 - sigma) - (T + x_lo) ** (1.0 - sigma)) / norm
    return left, right


def interaction_L(r2: float, r1: float, params: EnergyParams) -> float:
    """L(B_r2, R^n minus B_(r2 + r1)), the kernel mass between a ball and the outside of a concentric ball"""
    if r2 <= 0.0 or r1 < 0.0:
        raise DomainError(f"interaction_L needs r2 > 0 and r1 >= 0, got r2={r2}, r1={r1}")
    sigma, n = params.sp, params.n
    if r1 == 0.0 and sigma >= 1.0:
        return math.inf

    if n == 1:
        if math.isclose(sigma, 1.0):
            return 2.0 * math.log((2.0 * r2 + r1) / r1)
        return 2.0 * ((2.0 * r2 + r1) ** (1.0 - sigma) - r1 ** (1.0 - sigma)) / (sigma * (1.0 - sigma))

    T = r2 + r1
    value, _ = quad(
        lambda rho: rho * exterior_kernel_mass(rho, T, sigma, n), 0.0, r2,
        epsrel=1e-8, limit=200,
    )
    return 2.0 * math.pi * value


def interaction_lower_bound(R: float, r: float, s: float, p: float, n: int) -> float:
    """Three-regime lower bound for L(B_R, R^n minus B_(R + r)), valid for 0 < r < delta R"""
    delta = min(2.0 ** (-n), 2.0 ** (-n + 2.0 - p))
    if not 0.0 < r < delta * R:
        raise DomainError(f"lower bound requires 0 < r < {delta} R, got r={r}, R={R}")
    sp = s * p
    regime = EnergyParams(s=s, p=p, n=n).regime
    if regime == Regime.SUB:
        return delta * R ** (n - sp)
    if regime == Regime.CRIT:
        return delta * R ** (n - 1.0) * math.log(R / r)
    return delta * R ** (n - sp) * (r / R) ** (1.0 - sp)


def l_function(volume: float, s: float, p: float, n: int) -> float:
    regime = EnergyParams(s=s, p=p, n=n).regime
    if regime == Regime.SUB:
        return volume ** ((1.0 - s * p) / n)
    if regime == Regime.CRIT:
        return abs(math.log(volume))
    return 1.0


def c_hat_p(p: float) -> float:
    if p >= 2.0:
        return 2.0 ** (1.0 - p)
    return 3.0 * p * (p - 1.0) / 4.0 ** (4.0 - p)


def cone_constant(n: int, sigma: float, m_aperture: float) -> float:
    """Cone constant (2m)^(n-1) / ((n-1)m^2 + 1)^((n + sigma)/2), nonincreasing in sigma"""
    return (2.0 * m_aperture) ** (n - 1) / ((n - 1) * m_aperture ** 2 + 1.0) ** ((n + sigma) / 2.0)


def cone_lower_bound(x_norm: float, R: float, sigma: float, n: int, m_aperture: float = 1.0) -> float:
    """Certified lower bound for int over |y| > R of |x - y|^(-n - sigma) dy"""
    if x_norm >= R:
        raise DomainError(f"|x|={x_norm} must be < R={R}")
    if sigma <= 0.0 or m_aperture <= 0.0:
        raise DomainError("sigma and the cone aperture must be positive")
    return cone_constant(n, sigma, m_aperture) / sigma * (R - x_norm) ** (-sigma)
