import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np
import polars as pl

from phaselab.config import settings
from phaselab.errors import CertificationError, DomainError, InputError
from phaselab.models import (
    CertificateKind,
    ConvergenceReport,
    EnergyParams,
    Grid,
    MinimalityCertificate,
    MinimizeConfig,
    PotentialSpec,
    SolverStatus,
)
from phaselab.numerics.energy import energy_gradient, kernel_operator, total_energy
from phaselab.numerics.fields import Exterior, Field, ball_mask
from phaselab.numerics.potentials import eval_potential, potential_derivative

logger = logging.getLogger(__name__)

Candidate = Tuple[str, Field]

__all__ = [
    "minimize", "trace_frame", "save_state", "load_state", "candidate_suite", "restrict_suite",
    "certify_epsilon", "certify_Q", "epsilon_from_Q", "energy_gradient",
]


class _Objective:
    """Discrete total energy as a function of the values on Omega"""

    def __init__(self, u0: Field, omega_radius: float, params: EnergyParams, spec: PotentialSpec):
        self.template = u0
        self.params = params
        self.spec = spec
        self.op = kernel_operator(u0.grid, omega_radius, params)
        self.free = self.op.interior_box
        self.volume = u0.grid.cell_volume

    def field(self, free_values: np.ndarray) -> Field:
        values = np.array(self.template.values)
        values[self.free] = free_values
        return self.template.with_values(values)

    def __call__(self, free_values: np.ndarray, need_grad: bool = False):
        interior, cross, grad = self.op.evaluate(self.field(free_values), need_grad=need_grad)
        energy = (1.0 - self.params.s) * (interior + cross)
        energy += float(np.sum(eval_potential(self.spec, free_values))) * self.volume
        if not need_grad:
            return energy, None
        grad = (1.0 - self.params.s) * grad
        grad = grad + np.asarray(potential_derivative(self.spec, free_values)) * self.volume
        return energy, grad


def _projected_gradient_norm(x: np.ndarray, g: np.ndarray) -> float:
    return float(np.linalg.norm(np.clip(x - g, -1.0, 1.0) - x))


def minimize(
    u0: Field,
    omega_radius: float,
    params: EnergyParams,
    spec: PotentialSpec,
    cfg: Optional[MinimizeConfig] = None,
) -> Tuple[Field, ConvergenceReport]:
    """
    Projected gradient descent with Armijo backtracking on the cells of Omega.

    Cells outside Omega (box and exterior) stay frozen. A step is accepted
    only if the energy strictly decreases and satisfies the Armijo
    condition; after a success the trial step doubles.

    Args:
        u0: Starting field carrying the exterior data
        omega_radius: Radius of Omega
        params: Fractional parameters
        spec: Potential
        cfg: Solver controls (defaults from settings)

    Returns:
        (final iterate, convergence report with the energy trace)
    """
    cfg = cfg or MinimizeConfig()
    objective = _Objective(u0, omega_radius, params, spec)
    x = np.array(u0.values[objective.free])
    energy, grad = objective(x, need_grad=True)
    step = cfg.step_init

    energies, grad_norms, steps = [energy], [_projected_gradient_norm(x, grad)], [0.0]
    status = SolverStatus.MAX_ITERS
    iteration = 0
    logger.info(f"Minimizing on {x.size} cells: E0={energy:.6e}")

    for iteration in range(1, cfg.max_iters + 1):
        if grad_norms[-1] <= cfg.grad_tol:
            status = SolverStatus.CONVERGED
            iteration -= 1
            break

        accepted = False
        while step >= settings.MIN_STEP:
            trial = np.clip(x - step * grad, -1.0, 1.0)
            trial_energy, _ = objective(trial)
            if trial_energy < energy and trial_energy <= energy + cfg.armijo * float(grad @ (trial - x)):
                accepted = True
                break
            step *= cfg.backtracking

        if not accepted:
            status = SolverStatus.STAGNATED
            iteration -= 1
            logger.warning(f"Line search stagnated after {iteration} iterations at E={energy:.6e}")
            break

        x = trial
        energy, grad = objective(x, need_grad=True)
        energies.append(energy)
        grad_norms.append(_projected_gradient_norm(x, grad))
        steps.append(step)
        step *= 2.0
    else:
        if grad_norms[-1] <= cfg.grad_tol:
            status = SolverStatus.CONVERGED

    report = ConvergenceReport(
        status=status, iterations=iteration, energies=energies, grad_norms=grad_norms, steps=steps,
    )
    logger.info(f"Minimizer {status.value} after {iteration} iterations: E={energy:.6e}, |Pg|={grad_norms[-1]:.3e}")
    return objective.field(x), report


def trace_frame(report: ConvergenceReport) -> pl.DataFrame:
    """Convergence trace with columns iter,energy,grad_norm,step"""
    return pl.DataFrame({
        "iter": list(range(len(report.energies))),
        "energy": report.energies,
        "grad_norm": report.grad_norms,
        "step": report.steps,
    })


def save_state(u: Field, report: ConvergenceReport, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump({
        "grid": u.grid.model_dump(),
        "values": np.array(u.values),
        "exterior": u.exterior.describe(),
        "report": report.model_dump(),
    }, path)
    logger.info(f"Minimizer state saved to {path}")


def load_state(path: Path) -> Tuple[Field, ConvergenceReport]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"state file {path} not found")
    state = joblib.load(path)
    grid = Grid(**state["grid"])
    u = Field(grid, state["values"], Exterior.parse(state["exterior"]))
    return u, ConvergenceReport(**state["report"])


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def epsilon_from_Q(Q: float, E0: float) -> float:
    """epsilon = (Q - 1) E0"""
    if Q < 1.0:
        raise DomainError(f"Q must be >= 1, got {Q}")
    return (Q - 1.0) * E0


def _replace_inside(u: Field, inside: np.ndarray, values: np.ndarray) -> Field:
    out = np.array(u.values)
    out[inside] = np.clip(values, -1.0, 1.0)
    return u.with_values(out)


def candidate_suite(
    u: Field,
    omega_radius: float,
    params: EnergyParams,
    spec: PotentialSpec,
    seed: Optional[int] = None,
    perturbations: Optional[int] = None,
    refine_iters: int = 20,
) -> List[Candidate]:
    """
    Competitors agreeing with u outside B_omega.

    The suite holds u itself, the constants -1, 0, 1, translates of u by
    one and two cells along the first axis (clipped), a short
    projected-gradient refinement of u and seeded random perturbations.
    """
    rng = np.random.default_rng(settings.RANDOM_SEED if seed is None else seed)
    count = settings.CANDIDATE_PERTURBATIONS if perturbations is None else perturbations
    inside = ball_mask(u.grid, omega_radius)
    suite: List[Candidate] = [("self", u)]

    for value in (-1.0, 0.0, 1.0):
        suite.append((f"constant_{value:g}", _replace_inside(u, inside, np.full(np.count_nonzero(inside), value))))

    box = np.array(u.values).reshape(u.grid.shape)
    for shift in (-2, -1, 1, 2):
        moved = np.roll(box, shift, axis=0).reshape(-1)
        suite.append((f"translate_{shift:+d}", _replace_inside(u, inside, moved[inside])))

    refined, _ = minimize(u, omega_radius, params, spec, MinimizeConfig(max_iters=refine_iters))
    suite.append(("refined", refined))

    for k in range(count):
        noise = 0.1 * rng.normal(size=np.count_nonzero(inside))
        suite.append((f"perturb_{k}", _replace_inside(u, inside, u.values[inside] + noise)))
    return suite


def restrict_suite(suite: Sequence[Candidate], u: Field, radius: float) -> List[Candidate]:
    """Competitors that follow each candidate on B_radius and u elsewhere"""
    inside = ball_mask(u.grid, radius)
    return [(name, _replace_inside(u, inside, v.values[inside])) for name, v in suite]


def _check_agreement(u: Field, v: Field, inside: np.ndarray, name: str) -> None:
    if v.grid != u.grid or not v.exterior.matches(u.exterior):
        raise InputError(f"candidate {name!r} has a different grid or exterior data")
    if np.any(v.values[~inside] != u.values[~inside]):
        raise InputError(f"candidate {name!r} differs from u outside the domain")


def _energy(v: Field, radius: float, params: EnergyParams, spec: PotentialSpec) -> float:
    return total_energy(v, radius, params, spec, check_divergence=False).total


def certify_epsilon(
    u: Field,
    omega_radius: float,
    params: EnergyParams,
    spec: PotentialSpec,
    epsilon: float,
    candidates: Optional[Sequence[Candidate]] = None,
    strict: bool = False,
) -> MinimalityCertificate:
    """
    E(u) <= epsilon + E(v) against every candidate v; the worst violation decides.

    With strict=True a failed certificate raises CertificationError.
    """
    if epsilon < 0.0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    candidates = candidates if candidates is not None else candidate_suite(u, omega_radius, params, spec)
    inside = ball_mask(u.grid, omega_radius)
    base = _energy(u, omega_radius, params, spec)

    worst, worst_name = -np.inf, ""
    for name, v in candidates:
        _check_agreement(u, v, inside, name)
        violation = base - epsilon - _energy(v, omega_radius, params, spec)
        if violation > worst:
            worst, worst_name = violation, name

    passed = worst <= 1e-12 * max(1.0, abs(base))
    min_epsilon = max(0.0, float(worst) + epsilon)
    logger.info(
        f"epsilon-certificate eps={epsilon:.4g}: worst {worst:.4e} ({worst_name}), "
        f"suite admits eps >= {min_epsilon:.4g} -> {'pass' if passed else 'fail'}"
    )
    if strict and not passed:
        raise CertificationError(
            f"not an epsilon-minimizer for eps={epsilon:g}: {worst_name} beats u by {worst:.4e}"
        )
    return MinimalityCertificate(
        kind=CertificateKind.EPSILON, epsilon=epsilon, min_epsilon=min_epsilon, candidates_tested=len(candidates),
        worst_violation=float(worst), worst_candidate=worst_name, passed=passed,
    )


def certify_Q(
    u: Field,
    params: EnergyParams,
    spec: PotentialSpec,
    Q: float,
    subdomain_radii: Sequence[float],
    candidates: Optional[Dict[float, Sequence[Candidate]]] = None,
    omega_radius: Optional[float] = None,
    strict: bool = False,
) -> MinimalityCertificate:
    """
    E(u, A) <= Q E(v, A) on every tested ball A and competitor v.

    Also reports E0 = E(u, Omega) and the implied epsilon = (Q - 1) E0.
    With strict=True a failed certificate raises CertificationError.
    """
    if Q < 1.0:
        raise DomainError(f"Q must be >= 1, got {Q}")
    if not subdomain_radii:
        raise InputError("certify_Q needs at least one subdomain")
    omega_radius = omega_radius if omega_radius is not None else max(subdomain_radii)
    if max(subdomain_radii) > omega_radius:
        raise DomainError("subdomains must lie inside Omega")

    E0 = _energy(u, omega_radius, params, spec)
    worst, worst_name, tested = -np.inf, "", 0
    for radius in subdomain_radii:
        suite = (candidates or {}).get(radius)
        if suite is None:
            suite = candidate_suite(u, radius, params, spec)
        inside = ball_mask(u.grid, radius)
        base = _energy(u, radius, params, spec)
        for name, v in suite:
            _check_agreement(u, v, inside, name)
            violation = base - Q * _energy(v, radius, params, spec)
            tested += 1
            if violation > worst:
                worst, worst_name = violation, f"{name}@B_{radius:g}"

    passed = worst <= 1e-12 * max(1.0, abs(E0))
    logger.info(f"Q-certificate Q={Q}: worst {worst:.4e} ({worst_name}) -> {'pass' if passed else 'fail'}")
    if strict and not passed:
        raise CertificationError(f"not a Q-minimizer for Q={Q:g}: {worst_name} violates by {worst:.4e}")
    return MinimalityCertificate(
        kind=CertificateKind.Q, Q=Q, E0=E0, implied_epsilon=epsilon_from_Q(Q, E0),
        candidates_tested=tested, worst_violation=float(worst), worst_candidate=worst_name, passed=passed,
    )
