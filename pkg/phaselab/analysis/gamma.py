import logging
import math
from typing import Optional, Sequence

import numpy as np
import polars as pl
from joblib import Parallel, delayed

from phaselab.config import settings
from phaselab.errors import DomainError, InputError
from phaselab.models import EnergyParams, GammaSweep, PotentialSpec
from phaselab.numerics.energy import central_gradient, kinetic_energy, local_energy, n_jobs, total_energy
from phaselab.numerics.fields import Field, ball_mask
from phaselab.numerics.quadrature import knp_constant

logger = logging.getLogger(__name__)

GAMMA_COLUMNS = ["s", "measured", "limit", "rel_err", "resolved"]


def gradient_limit(v: Field, omega_radius: float, p: float) -> float:
    """(K_(n,p) / p) int_Omega |grad v|^p"""
    inside = ball_mask(v.grid, omega_radius)
    grad = np.linalg.norm(central_gradient(v)[inside], axis=1)
    return knp_constant(v.grid.n, p) / p * math.fsum(grad ** p) * v.grid.cell_volume


def is_resolved(s: float, h: float) -> bool:
    """The kernel scale 1 - s must stay above RESOLUTION_FACTOR cells"""
    return s <= 1.0 - settings.RESOLUTION_FACTOR * h


def _point(v: Field, omega_radius: float, p: float, s: float, spec: Optional[PotentialSpec]):
    params = EnergyParams(s=s, p=p, n=v.grid.n)
    breakdown = kinetic_energy(v, omega_radius, params, check_divergence=False)
    measured = (1.0 - s) * breakdown.full_inner
    energy = None
    if spec is not None:
        energy = total_energy(v, omega_radius, params, spec, check_divergence=False).total
    return measured, energy


def gamma_sweep(
    v: Field,
    omega_radius: float,
    p: float,
    s_list: Sequence[float],
    spec: Optional[PotentialSpec] = None,
) -> GammaSweep:
    """
    (1 - s) int_Omega int_(R^n) |v(x) - v(y)|^p |x - y|^(-n-sp) against its s -> 1 limit.

    Args:
        v: Smooth field with compact support inside the box
        omega_radius: Radius of Omega
        p: Integrability exponent
        s_list: Strictly increasing values in (0, 1)
        spec: When given, E_s^p(v, Omega) and E_1^p(v, Omega) are recorded too

    Returns:
        GammaSweep; points with s > 1 - RESOLUTION_FACTOR * h carry resolved = False
    """
    s_values = [float(s) for s in s_list]
    if not s_values:
        raise InputError("s_list is empty")
    if any(not 0.0 < s < 1.0 for s in s_values):
        raise DomainError("every s must lie in (0, 1)")
    if any(b <= a for a, b in zip(s_values, s_values[1:])):
        raise InputError("s_list must be strictly increasing")
    if not v.exterior.is_constant:
        raise DomainError("Gamma sweeps need a compactly supported field with constant exterior data")

    limit = gradient_limit(v, omega_radius, p)
    points = Parallel(n_jobs=n_jobs(), prefer="threads")(delayed(_point)(v, omega_radius, p, s, spec) for s in s_values)
    measured = [point[0] for point in points]

    errors = [abs(value - limit) / limit if limit > 0.0 else abs(value) for value in measured]
    resolved = [is_resolved(s, v.grid.h) for s in s_values]
    for s, value, error, ok in zip(s_values, measured, errors, resolved):
        logger.info(f"Gamma s={s:g}: measured={value:.6g}, limit={limit:.6g}, rel_err={error:.4f}")
        if not ok:
            logger.warning(f"s={s:g} is unresolved at h={v.grid.h:g}; need s <= {1.0 - settings.RESOLUTION_FACTOR * v.grid.h:g}")

    sweep = GammaSweep(s_values=s_values, measured=measured, limit=limit, relative_errors=errors, resolved=resolved)
    if spec is not None:
        sweep.energies = [point[1] for point in points]
        sweep.local_energy = local_energy(v, omega_radius, p, spec)
    return sweep


def gamma_frame(sweep: GammaSweep) -> pl.DataFrame:
    """Table s,measured,limit,rel_err,resolved"""
    return pl.DataFrame({
        "s": sweep.s_values,
        "measured": sweep.measured,
        "limit": [sweep.limit] * len(sweep.s_values),
        "rel_err": sweep.relative_errors,
        "resolved": sweep.resolved,
    }).select(GAMMA_COLUMNS)
