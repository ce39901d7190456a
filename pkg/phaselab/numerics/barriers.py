import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import polars as pl
from joblib import Parallel, delayed
from scipy.integrate import quad

from phaselab.analysis.fitting import fit_exponent
from phaselab.config import settings
from phaselab.errors import ConfigError, DomainError, InputError
from phaselab.models import (
    BoundCheck,
    CheckStatus,
    ConvergenceReport,
    EnergyParams,
    Grid,
    PotentialSpec,
    Regime,
    RegimeBound,
)
from phaselab.numerics.energy import kernel_operator, n_jobs, total_energy
from phaselab.numerics.fields import Field, Profile, make_field, register_profile
from phaselab.numerics.quadrature import sphere_area

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["R", "s", "p", "n", "energy_kinetic", "energy_potential", "F_R", "ratio"]


@register_profile
class BarrierPsi(Profile):
    """psi = -1 + 2 min{(|x| - R - 1)^+, 1}: -1 on B_(R+1), +1 outside B_(R+2)"""
    name = "psi"
    far_value = 1.0

    def __init__(self, R: float, length: float = 1.0):
        if R < 2.0:
            raise DomainError(f"barrier radius must be >= 2, got {R}")
        super().__init__(length)
        self.R = float(R)
        self.support = self.R + 2.0

    def shape(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points, axis=1)
        return -1.0 + 2.0 * np.minimum(np.maximum(r - self.R - 1.0, 0.0), 1.0)

    def params(self) -> Dict[str, float]:
        return {"R": self.R, "length": self.length}


def _norm(x) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))


def eval_psi(R: float, x) -> float:
    return float(BarrierPsi(R)(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])


def eval_d(R: float, x) -> float:
    """d(x) = max{R - |x|, 1}"""
    if R <= 0.0:
        raise DomainError(f"R must be positive, got {R}")
    return max(R - _norm(x), 1.0)


def lipschitz_bound_check(R: float, samples: int, params: EnergyParams, seed: Optional[int] = None) -> float:
    """
    Largest deficit of |psi(x) - psi(y)| <= 2|x - y| / d(x) (|x - y| < d(x)), <= 2 otherwise.

    x is drawn uniformly from B_(R+3), y at a random direction and a
    distance up to 2 d(x), so both branches are exercised.
    """
    if samples < 100:
        raise InputError(f"need at least 100 samples, got {samples}")
    rng = np.random.default_rng(settings.RANDOM_SEED if seed is None else seed)
    n = params.n
    psi = BarrierPsi(R)

    direction = rng.normal(size=(samples, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    x = direction * (R + 3.0) * rng.uniform(size=(samples, 1)) ** (1.0 / n)
    d = np.maximum(R - np.linalg.norm(x, axis=1), 1.0)

    step = rng.normal(size=(samples, n))
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    gap = 2.0 * d * rng.uniform(size=samples)
    y = x + step * gap[:, None]

    jump = np.abs(psi(x) - psi(y))
    bound = np.where(gap < d, 2.0 * gap / d, 2.0)
    worst = float(np.max(jump - bound))
    logger.info(f"Lipschitz check R={R}, n={n}: worst deficit {worst:.3e} over {samples} pairs")
    return worst


def regime_bound(R: float, s: float, p: float, n: int, c_bar: float = 1.0) -> RegimeBound:
    """F(R) scaled by c_bar / s, one branch per regime of sp"""
    regime = EnergyParams(s=s, p=p, n=n).regime
    sp = s * p
    if regime == Regime.SUB:
        value = R ** (n - sp) / (1.0 - sp)
    elif regime == Regime.CRIT:
        value = R ** (n - 1.0) * math.log(R)
    else:
        value = R ** (n - 1.0) / (sp - 1.0)
    return RegimeBound(regime=regime, value=c_bar / s * value, R=R, c_bar=c_bar)


def cross_term_bound(R: float, s: float, p: float, n: int) -> float:
    """2^p (1 - s) |dB_1| int_(B_R) d(x)^(-sp) dx"""
    sp = s * p

    def radial(t: float) -> float:
        return t ** (n - 1) * max(R - t, 1.0) ** (-sp)

    value, _ = quad(radial, 0.0, R, points=[max(R - 1.0, 0.0)], limit=200)
    return 2.0 ** p * (1.0 - s) * sphere_area(n) * value


def barrier_grid(R: float, h: float, n: int) -> Grid:
    return Grid.from_radius(n, h, math.ceil((R + 2.0) / h) * h + h)


def barrier_energy(R: float, h: float, params: EnergyParams, spec: PotentialSpec) -> Dict[str, float]:
    grid = barrier_grid(R, h, params.n)
    psi = make_field(grid, BarrierPsi(R))
    energy = total_energy(psi, R + 2.0, params, spec)
    bound = regime_bound(R, params.s, params.p, params.n)
    kinetic = (1.0 - params.s) * energy.kinetic
    total = kinetic + energy.potential
    logger.info(f"Barrier R={R}: E={total:.6g}, F(R)={bound.value:.6g}")
    return {
        "R": R, "s": params.s, "p": params.p, "n": params.n,
        "energy_kinetic": kinetic, "energy_potential": energy.potential,
        "F_R": bound.value, "ratio": total / bound.value,
    }


def barrier_energy_sweep(
    R_list: List[float],
    params: EnergyParams,
    spec: PotentialSpec,
    h: float = 0.1,
) -> Tuple[pl.DataFrame, Dict[str, float]]:
    """
    True energy of psi on B_(R+2) against the regime formula F(R).

    Returns:
        (table with SWEEP_COLUMNS ordered by R, summary with the fitted exponent,
        its r2 and the measured envelope c_bar = max ratio)
    """
    if any(R < 2.0 for R in R_list):
        raise DomainError("every barrier radius must be >= 2")
    if h > 0.25:
        raise ConfigError(f"h={h} under-resolves the unit ramp of psi (need h <= 0.25)")
    if h > 0.1:
        logger.warning(f"h={h} is coarse for the unit ramp; results may be inaccurate")

    radii = sorted(R_list)
    rows = Parallel(n_jobs=n_jobs(), prefer="threads")(delayed(barrier_energy)(R, h, params, spec) for R in radii)
    table = pl.DataFrame(rows).select(SWEEP_COLUMNS)

    energies = (table["energy_kinetic"] + table["energy_potential"]).to_list()
    summary: Dict[str, float] = {"c_bar": float(table["ratio"].max())}
    if len(radii) >= 3:
        slope, _, r2 = fit_exponent(radii, energies)
        summary.update({"exponent": slope, "r2": r2})
    return table, summary


def minimizer_energy_bound_check(
    u: Field,
    R: float,
    params: EnergyParams,
    spec: PotentialSpec,
    report: Optional[ConvergenceReport] = None,
) -> BoundCheck:
    """
    E(u, B_R) <= E(psi, B_(R+2)) + (1 - s) u(B_R, R^n minus B_(R+1)).

    A minimizer that did not converge makes the check inconclusive.
    """
    if u.grid.box_radius < R + 2.0:
        raise DomainError(f"box radius {u.grid.box_radius} does not contain B_(R+2) for R={R}")

    lhs = total_energy(u, R, params, spec).total
    psi = make_field(u.grid, BarrierPsi(R))
    psi_energy = total_energy(psi, R + 2.0, params, spec).total
    cross = (1.0 - params.s) * kernel_operator(u.grid, R, params).interaction(u, R + 1.0)
    rhs = psi_energy + cross
    margin = rhs - lhs

    if report is not None and not report.converged:
        status = CheckStatus.INCONCLUSIVE
        logger.warning(f"Bound check at R={R} inconclusive: minimizer status {report.status.value}")
    elif lhs <= rhs * (1.0 + 1e-12) + 1e-14:
        status = CheckStatus.PASS
    else:
        status = CheckStatus.FAIL
        logger.error(f"Bound check failed at R={R}: {lhs:.6g} > {rhs:.6g}")
    return BoundCheck(status=status, lhs=lhs, rhs=rhs, psi_energy=psi_energy, cross_term=cross, margin=margin)
