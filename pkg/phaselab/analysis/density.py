import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import polars as pl

from phaselab.analysis.fitting import fit_exponent
from phaselab.errors import ConfigError, DomainError, InputError, SeedConditionError
from phaselab.models import DensityScan, EnergyParams, PotentialSpec
from phaselab.numerics.barriers import regime_bound
from phaselab.numerics.energy import kinetic_energy
from phaselab.numerics.fields import (
    Field,
    ball_weights,
    interface_integral,
    level_set_volume,
    unit_ball_volume,
)
from phaselab.numerics.potentials import eval_potential, lambda_mu

logger = logging.getLogger(__name__)

DENSITY_COLUMNS = ["r", "V", "interface", "lhs", "lhs_over_rn"]


def band_thresholds(spec: PotentialSpec, thetas: Tuple[float, float]) -> Tuple[float, float]:
    """theta_* = min{theta_1, theta_2, -1 + q} and theta^* = max of the same three"""
    if spec.q is None:
        raise ConfigError("density scans need the well width q; calibrate c1 and q first")
    theta1, theta2 = thetas
    for theta in thetas:
        if not -1.0 < theta < 1.0:
            raise DomainError(f"thresholds must lie in (-1, 1), got {theta}")
    candidates = (theta1, theta2, -1.0 + spec.q)
    return min(candidates), max(candidates)


def _check_radii(u: Field, radii: Sequence[float], omega_radius: Optional[float], stable: bool) -> List[float]:
    radii = [float(r) for r in radii]
    if not radii or radii[0] <= 0.0:
        raise InputError("radii must be a nonempty list of positive values")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InputError("radii must be strictly increasing")
    omega = omega_radius if omega_radius is not None else u.grid.box_radius
    factor = 4.0 if stable else 3.0
    if factor * radii[-1] > omega * (1.0 + 1e-9):
        ball = "B_4r" if stable else "B_3r"
        raise DomainError(f"radius {radii[-1]} violates {ball} inside Omega = B_{omega:g}")
    return radii


def _seed(u: Field, theta1: float, seed_radius: float, c0: float) -> float:
    volume = level_set_volume(u, theta1, seed_radius)
    if volume <= c0:
        raise SeedConditionError(
            f"|B_{seed_radius:g} n {{u > {theta1:g}}}| = {volume:.4g} does not exceed c0 = {c0:.4g}"
        )
    return volume


def _band(u: Field, lo: float, hi: float, r: float, m: float) -> float:
    return interface_integral(u, lo, hi, r, m) if lo < hi else 0.0


def density_scan(
    u: Field,
    spec: PotentialSpec,
    thetas: Tuple[float, float],
    radii: Sequence[float],
    seed_radius: Optional[float] = None,
    c0: float = 0.0,
    omega_radius: Optional[float] = None,
    stable: bool = False,
) -> DensityScan:
    """
    Combined density estimate c |1 + u|^m band integral + |B_r n {u > theta_2}| against r^n.

    Args:
        u: Minimizer or certified epsilon-minimizer
        spec: Potential carrying the calibrated well width q
        thetas: (theta_1, theta_2)
        radii: Strictly increasing radii with B_3r (B_4r if stable) inside Omega
        seed_radius: r_0 of the nondegeneracy seed (defaults to the smallest radius)
        c0: Volume the seed must exceed
        omega_radius: Radius of Omega (defaults to the box radius)
        stable: Use the B_4r variant

    Returns:
        DensityScan with the running minimum c_tilde_hat and the fitted exponent
    """
    radii = _check_radii(u, radii, omega_radius, stable)
    theta_star, theta_sup = band_thresholds(spec, thetas)
    theta1, theta2 = thetas
    seed_volume = _seed(u, theta1, seed_radius if seed_radius is not None else radii[0], c0)

    weight = (1.0 + theta_star) ** (-spec.m)
    n = u.grid.n
    ceiling = unit_ball_volume(n) * (1.0 + weight * 2.0 ** spec.m)

    V, band, lhs, ratio = [], [], [], []
    for r in radii:
        volume = level_set_volume(u, theta2, r)
        interface = _band(u, theta_star, theta_sup, r, spec.m)
        total = weight * interface + volume
        V.append(volume)
        band.append(interface)
        lhs.append(total)
        ratio.append(total / r ** n)
        logger.info(f"Density r={r:g}: V={volume:.6g}, band={interface:.6g}, lhs/r^n={total / r ** n:.6g}")

    sup_ok = all(value <= ceiling * (1.0 + 1e-9) for value in ratio)
    if not sup_ok:
        logger.warning(f"Density ratio {max(ratio):.4g} exceeds the crude ceiling {ceiling:.4g}")

    slope, _, r2 = fit_exponent(radii, lhs)
    return DensityScan(
        theta1=theta1, theta2=theta2, theta_star=theta_star, theta_sup=theta_sup, band_weight=weight,
        radii=radii, V_values=V, interface_values=band, lhs_values=lhs, lhs_over_rn=ratio,
        fitted_exponent=slope, r_squared=r2, c_tilde_hat=min(ratio), seed_volume=seed_volume,
        sup_bound_ok=sup_ok,
    )


def _weighted_energy(u: Field, r: float, params: EnergyParams, spec: PotentialSpec) -> float:
    kinetic = kinetic_energy(u, r, params, check_divergence=False).total
    weights = ball_weights(u.grid, r)
    potential = math.fsum(weights * np.asarray(eval_potential(spec, u.values))) * u.grid.cell_volume
    return kinetic + potential


def full_density_scan(
    u: Field,
    spec: PotentialSpec,
    radii: Sequence[float],
    thetas: Tuple[float, float] = (0.0, 0.0),
    params: Optional[EnergyParams] = None,
    seed_radius: Optional[float] = None,
    c0: float = 0.0,
    omega_radius: Optional[float] = None,
    stable: bool = False,
) -> DensityScan:
    """
    Volume-only density estimate |B_r n {u > theta_2}| > c r^n.

    With params given, also reports the reabsorption quantities
    lambda_(theta^*)^-1 E(u, B_r) (band_bounds) and lambda_(theta^*)^-1 F(r)
    (energy_bounds). The band integral over {u <= theta^*} is checked
    against band_bounds.
    """
    radii = _check_radii(u, radii, omega_radius, stable)
    theta_star, theta_sup = band_thresholds(spec, thetas)
    theta1, theta2 = thetas
    seed_volume = _seed(u, theta1, seed_radius if seed_radius is not None else radii[0], c0)
    n = u.grid.n

    V = [level_set_volume(u, theta2, r) for r in radii]
    lower = float(np.nextafter(-1.0, 0.0))
    band = [_band(u, lower, theta_sup, r, spec.m) for r in radii]
    ratio = [v / r ** n for v, r in zip(V, radii)]
    ceiling = unit_ball_volume(n)
    sup_ok = all(value <= ceiling * (1.0 + 1e-9) for value in ratio)

    band_bounds = energy_bounds = None
    if params is not None:
        inverse = 1.0 / lambda_mu(spec, theta_sup)
        band_bounds = [inverse * _weighted_energy(u, r, params, spec) for r in radii]
        energy_bounds = [inverse * regime_bound(r, params.s, params.p, n).value for r in radii]
        for r, integral, bound in zip(radii, band, band_bounds):
            if integral > bound * (1.0 + 1e-9):
                logger.warning(f"Band integral {integral:.4g} exceeds lambda^-1 E = {bound:.4g} at r={r:g}")

    slope, _, r2 = fit_exponent(radii, V)
    logger.info(f"Full density scan over {len(radii)} radii: exponent {slope:.4f}, c_tilde_hat {min(ratio):.4g}")
    return DensityScan(
        theta1=theta1, theta2=theta2, theta_star=theta_star, theta_sup=theta_sup,
        band_weight=(1.0 + theta_star) ** (-spec.m),
        radii=radii, V_values=V, interface_values=band, lhs_values=V, lhs_over_rn=ratio,
        fitted_exponent=slope, r_squared=r2, c_tilde_hat=min(ratio), seed_volume=seed_volume,
        sup_bound_ok=sup_ok, band_bounds=band_bounds, energy_bounds=energy_bounds,
    )


def density_frame(scan: DensityScan) -> pl.DataFrame:
    """Table r,V,interface,lhs,lhs_over_rn"""
    return pl.DataFrame({
        "r": scan.radii,
        "V": scan.V_values,
        "interface": scan.interface_values,
        "lhs": scan.lhs_values,
        "lhs_over_rn": scan.lhs_over_rn,
    }).select(DENSITY_COLUMNS)
