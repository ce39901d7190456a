import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from phaselab.config import settings
from phaselab.errors import ConfigError, DomainError
from phaselab.models import EnergyBreakdown, EnergyParams, Grid, PotentialSpec
from phaselab.numerics.fields import ExteriorKind, Field, ball_mask, grid_indices
from phaselab.numerics.potentials import eval_potential, potential_derivative
from phaselab.numerics.quadrature import (
    cell_tail_mass_1d,
    exterior_kernel_mass,
    knp_constant,
    offset_table,
    sphere_area,
)

logger = logging.getLogger(__name__)

_RADIUS_TOL = 1e-9


def n_jobs() -> int:
    return -1 if settings.N_JOBS == 0 else settings.N_JOBS


class KernelOperator:
    """
    Discrete kinetic form on one grid, one ball Omega and one (s, p).

    Cells of the box plus an exterior annulus out to the tail radius form
    the extended array. Every ordered pair (i, j) with i in Omega gets a
    weight from the exact cell-pair integral; pairs inside Omega carry a
    factor 1/2. Beyond the tail radius the exterior is constant and its
    contribution is integrated in closed form.
    """

    def __init__(self, grid: Grid, omega_radius: float, params: EnergyParams):
        if params.n != grid.n:
            raise ConfigError(f"energy parameters are {params.n}D but the grid is {grid.n}D")
        if omega_radius <= 0.0 or omega_radius > grid.box_radius * (1.0 + _RADIUS_TOL):
            raise DomainError(f"Omega = B_{omega_radius} is not inside the box of radius {grid.box_radius}")

        self.grid = grid
        self.params = params
        self.omega_radius = omega_radius
        n, half, h = grid.n, grid.half, grid.h
        self.sigma = params.sp
        self.p = params.p
        self.linear = self.sigma >= 1.0
        self.a = (self.p - n - self.sigma) if self.linear else (-n - self.sigma)

        M = int(math.ceil(params.tail_factor * half))
        self.ext_half = M
        self.idx = grid_indices(n, M)
        norm2 = np.sum(self.idx * self.idx, axis=1)
        if n == 1:
            self.tail_radius = (M + 0.5) * h
            live = np.ones(norm2.size, dtype=bool)
        else:
            self.tail_radius = params.tail_factor * half * h
            live = norm2 < (params.tail_factor * half) ** 2

        in_box = np.all(np.abs(self.idx) <= half, axis=1)
        self.box_positions = np.flatnonzero(in_box)
        self.outside_box = np.flatnonzero(~in_box)
        in_omega = in_box & (norm2 < (omega_radius / h) ** 2 * (1.0 - _RADIUS_TOL))
        self.in_omega = in_omega
        self.interior = np.flatnonzero(in_omega)
        self.interior_box = np.flatnonzero(ball_mask(grid, omega_radius))
        self.live = np.flatnonzero(live)
        self.live_in_omega = in_omega[self.live]

        self.weights = self._weight_table(half + M)
        if self.linear:
            self.self_coeff = 0.5 * knp_constant(n, self.p) / sphere_area(n) * h ** (n + self.p - self.sigma) * \
                offset_table(n, self.a, 0)[(0,) * n]
        else:
            self.self_coeff = 0.0
        self.strides = [(2 * M + 1) ** (n - 1 - axis) for axis in range(n)]
        self._tail_masses()

        self.chunks = [
            slice(start, min(start + settings.KERNEL_CHUNK_ROWS, self.interior.size))
            for start in range(0, self.interior.size, settings.KERNEL_CHUNK_ROWS)
        ]
        self._cache: Optional[List[np.ndarray]] = None
        if self.interior.size * self.live.size <= settings.KERNEL_CACHE_PAIRS:
            self._cache = [self._chunk_weights(rows) for rows in self.chunks]
        logger.debug(
            f"KernelOperator n={n} h={h} sp={self.sigma:.4f}: {self.interior.size} interior cells, "
            f"{self.live.size} partners, tail radius {self.tail_radius:.4f}"
        )

    def _weight_table(self, max_offset: int) -> np.ndarray:
        n, h = self.grid.n, self.grid.h
        J = offset_table(n, self.a, max_offset)
        axis = np.arange(max_offset + 1, dtype=float)
        if n == 1:
            dist = axis
        else:
            D1, D2 = np.meshgrid(axis, axis, indexing="ij")
            dist = np.hypot(D1, D2)
        table = np.zeros_like(J)
        nonzero = dist > 0.0
        table[nonzero] = h ** (n - self.sigma) * J[nonzero] / dist[nonzero] ** (self.a + n + self.sigma)
        return table

    def _tail_masses(self) -> None:
        h, T = self.grid.h, self.tail_radius
        centers = self.idx[self.interior] * h
        if self.grid.n == 1:
            x = centers[:, 0]
            self.tail_left, self.tail_right = cell_tail_mass_1d(x - 0.5 * h, x + 0.5 * h, T, self.sigma)
            return
        rho = np.linalg.norm(centers, axis=1)
        unique, inverse = np.unique(np.round(rho, 12), return_inverse=True)
        tau = np.array([exterior_kernel_mass(r, T, self.sigma, 2) for r in unique])
        mass = h * h * tau[inverse]
        self.tail_left = 0.5 * mass
        self.tail_right = 0.5 * mass

    def _chunk_weights(self, rows: slice) -> np.ndarray:
        offsets = np.abs(self.idx[self.live][None, :, :] - self.idx[self.interior[rows]][:, None, :])
        if self.grid.n == 1:
            return self.weights[offsets[..., 0]]
        return self.weights[offsets[..., 0], offsets[..., 1]]

    # -----------------------------------------------------------------------

    def interior_weights(self) -> np.ndarray:
        """Pair weights between Omega's cells, rows and columns in interior order"""
        return self._chunk_weights(slice(0, self.interior.size))[:, self.live_in_omega]

    def extend(self, u: Field) -> np.ndarray:
        """Values of u on the extended array"""
        if u.grid != self.grid:
            raise ConfigError("field grid does not match the operator grid")
        values = np.empty(self.idx.shape[0])
        values[self.box_positions] = u.values
        values[self.outside_box] = u.exterior.evaluate(self.idx[self.outside_box] * self.grid.h)
        return values

    def far_values(self, u: Field) -> Tuple[float, float]:
        exterior = u.exterior
        if exterior.kind == ExteriorKind.PROFILE and exterior.settle_radius > self.tail_radius:
            raise ConfigError(
                f"exterior profile settles at {exterior.settle_radius}, beyond the tail radius {self.tail_radius}"
            )
        if exterior.kind == ExteriorKind.SIGN and self.grid.n != 1:
            raise ConfigError("two-phase exterior data is one-dimensional")
        return exterior.left, exterior.right

    def _pair_chunk(self, k: int, ext: np.ndarray, need_grad: bool):
        rows = self.chunks[k]
        w = self._cache[k] if self._cache is not None else self._chunk_weights(rows)
        diff = ext[self.interior[rows]][:, None] - ext[self.live][None, :]
        mag = np.abs(diff)
        terms = w * mag ** self.p
        interior_rows = 0.5 * terms[:, self.live_in_omega].sum(axis=1)
        cross_rows = terms[:, ~self.live_in_omega].sum(axis=1)
        grad_rows = None
        if need_grad:
            grad_rows = self.p * (w * np.sign(diff) * mag ** (self.p - 1.0)).sum(axis=1)
        return interior_rows, cross_rows, grad_rows

    def _cell_gradients(self, ext: np.ndarray) -> np.ndarray:
        h = self.grid.h
        return np.stack(
            [(ext[self.interior + s] - ext[self.interior - s]) / (2.0 * h) for s in self.strides], axis=1
        )

    def evaluate(self, u: Field, need_grad: bool = False):
        """
        Kinetic parts of u and, optionally, their gradient on the interior cells.

        Returns:
            (kinetic_interior, kinetic_cross, gradient over interior cells or None)
        """
        ext = self.extend(u)
        far_left, far_right = self.far_values(u)

        if n_jobs() == 1 or len(self.chunks) == 1:
            parts = [self._pair_chunk(k, ext, need_grad) for k in range(len(self.chunks))]
        else:
            parts = Parallel(n_jobs=n_jobs(), prefer="threads")(
                delayed(self._pair_chunk)(k, ext, need_grad) for k in range(len(self.chunks))
            )

        interior_rows = np.concatenate([part[0] for part in parts]) if parts else np.zeros(0)
        cross_rows = np.concatenate([part[1] for part in parts]) if parts else np.zeros(0)

        u_in = ext[self.interior]
        dl, dr = u_in - far_left, u_in - far_right
        tail_rows = np.abs(dl) ** self.p * self.tail_left + np.abs(dr) ** self.p * self.tail_right

        grad = None
        if need_grad:
            grad = np.concatenate([part[2] for part in parts]) if parts else np.zeros(0)
            grad = grad + self.p * (
                np.sign(dl) * np.abs(dl) ** (self.p - 1.0) * self.tail_left
                + np.sign(dr) * np.abs(dr) ** (self.p - 1.0) * self.tail_right
            )

        self_rows = np.zeros(0)
        if self.linear and self.interior.size:
            g = self._cell_gradients(ext)
            gnorm = np.linalg.norm(g, axis=1)
            self_rows = self.self_coeff * gnorm ** self.p
            if need_grad:
                grad_ext = np.zeros_like(ext)
                with np.errstate(divide="ignore", invalid="ignore"):
                    scale = np.where(gnorm > 0.0, gnorm ** (self.p - 2.0), 0.0)
                for axis, stride in enumerate(self.strides):
                    flux = self.self_coeff * self.p * scale * g[:, axis] / (2.0 * self.grid.h)
                    np.add.at(grad_ext, self.interior + stride, flux)
                    np.add.at(grad_ext, self.interior - stride, -flux)
                grad = grad + grad_ext[self.interior]

        kinetic_interior = math.fsum(interior_rows) + math.fsum(self_rows)
        kinetic_cross = math.fsum(cross_rows) + math.fsum(tail_rows)
        return kinetic_interior, kinetic_cross, grad

    def interaction(self, u: Field, outer_radius: float) -> float:
        """int_Omega int_(|y| >= outer_radius) |u(x) - u(y)|^p |x - y|^(-n-sp)"""
        if not self.omega_radius <= outer_radius <= self.tail_radius:
            raise DomainError(f"outer radius {outer_radius} must lie between Omega and the tail radius")
        ext = self.extend(u)
        far_left, far_right = self.far_values(u)
        live_norm2 = np.sum(self.idx[self.live] ** 2, axis=1)
        far = live_norm2 >= (outer_radius / self.grid.h) ** 2 * (1.0 - _RADIUS_TOL)

        rows_total = []
        for k, rows in enumerate(self.chunks):
            w = self._cache[k] if self._cache is not None else self._chunk_weights(rows)
            diff = ext[self.interior[rows]][:, None] - ext[self.live[far]][None, :]
            rows_total.append((w[:, far] * np.abs(diff) ** self.p).sum(axis=1))

        u_in = ext[self.interior]
        tail = np.abs(u_in - far_left) ** self.p * self.tail_left + np.abs(u_in - far_right) ** self.p * self.tail_right
        pairs = np.concatenate(rows_total) if rows_total else np.zeros(0)
        return math.fsum(pairs) + math.fsum(tail)


@lru_cache(maxsize=8)
def kernel_operator(grid: Grid, omega_radius: float, params: EnergyParams) -> KernelOperator:
    return KernelOperator(grid, omega_radius, params)


def _refinement_ratio(u: Field, omega_radius: float, params: EnergyParams, coarse: float) -> float:
    fine = u.refined()
    ki, kc, _ = kernel_operator(fine.grid, omega_radius, params).evaluate(fine)
    return (ki + kc) / coarse if coarse > 0.0 else 1.0


def kinetic_energy(
    u: Field,
    omega_radius: float,
    params: EnergyParams,
    check_divergence: bool = True,
) -> EnergyBreakdown:
    """
    Kinetic term K_s^p(u, B_omega) split into interior and cross parts.

    When sp >= 1 and u carries a closed-form profile, the energy is also
    evaluated at h/2; growth beyond settings.DIVERGENCE_RATIO flags an
    infinite seminorm and the kinetic parts are reported as inf.

    A jump grows by about 2^(sp - 1) per halving, so near sp = 1 the ratio
    stays under the threshold (1.07 at sp = 1.1) and slow divergence goes
    unflagged. Fields without a profile are never checked.
    """
    interior, cross, _ = kernel_operator(u.grid, omega_radius, params).evaluate(u)
    diverged = False
    if check_divergence and params.sp >= 1.0 and u.profile is not None:
        ratio = _refinement_ratio(u, omega_radius, params, interior + cross)
        if ratio > settings.DIVERGENCE_RATIO:
            logger.warning(f"Kinetic energy grows by {ratio:.3f} under refinement at sp={params.sp}: divergent")
            diverged = True
            interior, cross = math.inf, math.inf
    total = (1.0 - params.s) * (interior + cross)
    return EnergyBreakdown(
        kinetic_interior=interior, kinetic_cross=cross, potential=0.0,
        total=total, s=params.s, diverged=diverged,
    )


def potential_energy(u: Field, omega_radius: float, spec: PotentialSpec) -> float:
    inside = ball_mask(u.grid, omega_radius)
    return math.fsum(np.atleast_1d(eval_potential(spec, u.values[inside]))) * u.grid.cell_volume


def total_energy(
    u: Field,
    omega_radius: float,
    params: EnergyParams,
    spec: PotentialSpec,
    check_divergence: bool = True,
) -> EnergyBreakdown:
    """E_s^p(u, B_omega) = (1 - s) K_s^p(u, B_omega) + int W(u)"""
    kinetic = kinetic_energy(u, omega_radius, params, check_divergence)
    potential = potential_energy(u, omega_radius, spec)
    return kinetic.model_copy(update={"potential": potential, "total": kinetic.total + potential})


def energy_gradient(u: Field, omega_radius: float, params: EnergyParams, spec: PotentialSpec) -> np.ndarray:
    """Per-cell derivative of the discrete total energy; zero off Omega"""
    op = kernel_operator(u.grid, omega_radius, params)
    _, _, grad = op.evaluate(u, need_grad=True)
    full = np.zeros(u.values.size)
    full[op.interior_box] = (1.0 - params.s) * grad
    full[op.interior_box] += np.atleast_1d(potential_derivative(spec, u.values[op.interior_box])) * u.grid.cell_volume
    return full


def full_seminorm(u: Field, params: EnergyParams) -> float:
    """
    int_(R^n) int_(R^n) |u(x) - u(y)|^p |x - y|^(-n-sp) for u constant outside the box ball.
    """
    if not u.exterior.is_constant:
        raise DomainError("full-space seminorm needs constant exterior data")
    outside = ~ball_mask(u.grid, u.grid.box_radius)
    if np.any(u.values[outside] != u.exterior.left):
        raise DomainError("field is not constant outside the ball of radius box_radius")
    kinetic = kinetic_energy(u, u.grid.box_radius, params, check_divergence=False)
    return 2.0 * kinetic.kinetic


def central_gradient(u: Field) -> np.ndarray:
    """Central-difference gradient on the box, shape (cells, n); boundary rows use the exterior"""
    n, half, h = u.grid.n, u.grid.half, u.grid.h
    padded_idx = grid_indices(n, half + 1)
    padded = u.exterior.evaluate(padded_idx * h)
    inner = np.all(np.abs(padded_idx) <= half, axis=1)
    padded[inner] = u.values
    side = 2 * half + 3
    strides = [side ** (n - 1 - axis) for axis in range(n)]
    pos = np.flatnonzero(inner)
    return np.stack([(padded[pos + s] - padded[pos - s]) / (2.0 * h) for s in strides], axis=1)


def local_energy(u: Field, omega_radius: float, p: float, spec: PotentialSpec) -> float:
    """E_1^p(u, B_omega) = (K_(n,p) / 2p) int |grad u|^p + int W(u)"""
    if omega_radius > u.grid.box_radius * (1.0 + _RADIUS_TOL):
        raise DomainError(f"omega_radius {omega_radius} exceeds box_radius {u.grid.box_radius}")
    inside = ball_mask(u.grid, omega_radius)
    grad = np.linalg.norm(central_gradient(u)[inside], axis=1)
    kinetic = knp_constant(u.grid.n, p) / (2.0 * p) * math.fsum(grad ** p) * u.grid.cell_volume
    return kinetic + potential_energy(u, omega_radius, spec)
