import logging
import math
from typing import Callable, Dict, List, NamedTuple, Tuple

import numpy as np
import polars as pl

from phaselab.analysis.density import density_frame, density_scan, full_density_scan
from phaselab.analysis.fitting import fit_exponent
from phaselab.analysis.gamma import gamma_frame, gamma_sweep
from phaselab.errors import DivergenceError
from phaselab.models import (
    EnergyParams,
    ExperimentConfig,
    ExperimentKind,
    Grid,
    MinimizeConfig,
    PotentialSpec,
    Regime,
    ScanReport,
)
from phaselab.numerics.barriers import barrier_energy_sweep
from phaselab.numerics.energy import kinetic_energy, total_energy
from phaselab.numerics.fields import (
    CosBumpProfile,
    Exterior,
    Field,
    IndicatorProfile,
    LogBumpProfile,
    TwoPhaseProfile,
    ball_mask,
    make_field,
)
from phaselab.numerics.minimizer import certify_epsilon, certify_Q, minimize, trace_frame
from phaselab.numerics.potentials import (
    analytic_q,
    calibrate_c1_q,
    check_derivative_identity,
    check_sandwich,
    check_well_condition,
    default_spec,
    recursion_holds,
    recursive_polynomial,
)
from phaselab.numerics.quadrature import interaction_L, interaction_lower_bound

logger = logging.getLogger(__name__)

Outcome = Tuple[pl.DataFrame, ScanReport]

IDENTITY_TOL = 1e-6
INDICATOR_TOL = 0.02


class Experiment(NamedTuple):
    kind: ExperimentKind
    anchor: str
    required: Tuple[str, ...]
    runner: Callable[[ExperimentConfig], Outcome]


# ---------------------------------------------------------------------------
# Shared construction
# ---------------------------------------------------------------------------

def _params(cfg: ExperimentConfig) -> EnergyParams:
    return EnergyParams(s=cfg.s, p=cfg.p, n=cfg.n)


def _spec(cfg: ExperimentConfig, calibrated: bool = False) -> PotentialSpec:
    return default_spec(cfg.m, cfg.normalization, cfg.scale, cfg.c if calibrated else None)


def _grid(cfg: ExperimentConfig) -> Grid:
    return Grid.from_radius(cfg.n, cfg.h, cfg.box_radius)


def initial_field(cfg: ExperimentConfig, grid: Grid) -> Field:
    """Two-phase step (jump at h/2) or seeded noise on Omega inside a constant phase"""
    if cfg.exterior == "two_phase":
        return make_field(grid, TwoPhaseProfile(jump=0.5 * cfg.h))
    level = -1.0 if cfg.exterior == "minus_one" else 1.0
    rng = np.random.default_rng(cfg.seed)
    values = np.full(grid.cell_count ** grid.n, level)
    inside = ball_mask(grid, cfg.omega)
    values[inside] = rng.uniform(-1.0, 1.0, size=np.count_nonzero(inside))
    return Field(grid, values, Exterior.constant(level))


def _minimized(cfg: ExperimentConfig, spec: PotentialSpec):
    u0 = initial_field(cfg, _grid(cfg))
    return minimize(u0, cfg.omega, _params(cfg), spec, MinimizeConfig(max_iters=cfg.max_iters, seed=cfg.seed))


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_potential_check(cfg: ExperimentConfig) -> Outcome:
    xs = np.linspace(-1.0, 1.0, cfg.samples)
    rows = []
    for k in range(1, math.floor(cfg.m) + 1):
        rows.append({
            "m": cfg.m, "k": k,
            "degree": recursive_polynomial(cfg.m, k).degree,
            "identity_residual": check_derivative_identity(cfg.m, k, xs),
            "recursion_exact": recursion_holds(cfg.m, k),
        })
    table = pl.DataFrame(rows)

    c1, q = calibrate_c1_q(cfg.m, cfg.c, cfg.normalization, cfg.scale)
    spec = PotentialSpec(m=cfg.m, normalization=cfg.normalization, scale=cfg.scale, c1=c1, q=q)
    holds, slack = check_well_condition(spec, cfg.samples)
    worst = float(table["identity_residual"].max())

    flags = [] if holds else ["well_condition_violated"]
    if worst > IDENTITY_TOL:
        flags.append("identity_residual_above_tolerance")
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height,
        metrics={
            "c1": c1, "q": q, "analytic_q": analytic_q(cfg.m, cfg.c), "well_slack": slack,
            "sandwich_slack": check_sandwich(spec), "max_identity_residual": worst,
        },
        flags=flags, passed=not flags,
    )
    return table, report


def run_kernel_bounds(cfg: ExperimentConfig) -> Outcome:
    params = _params(cfg)
    delta = min(2.0 ** (-cfg.n), 2.0 ** (-cfg.n + 2.0 - cfg.p))
    rows: List[Dict] = []
    for R in cfg.R_list or []:
        for r in cfg.radii or []:
            if not 0.0 < r < delta * R:
                logger.warning(f"Skipping (R={R}, r={r}): the lower bound needs r < {delta} R")
                continue
            value = interaction_L(R, r, params)
            bound = interaction_lower_bound(R, r, cfg.s, cfg.p, cfg.n)
            rows.append({"check": "interaction", "R": R, "r": r, "eta": None,
                         "value": value, "reference": bound, "margin": value - bound})

    fitted: Dict[str, float] = {}
    flags: List[str] = []
    if cfg.eta_list and cfg.n == 1:
        if params.sp >= 1.0:
            flags.append("indicator_energy_infinite")
        else:
            grid = _grid(cfg)
            sp = params.sp
            energies = []
            for eta in cfg.eta_list:
                u = make_field(grid, IndicatorProfile(eta))
                value = kinetic_energy(u, cfg.omega, params, check_divergence=False).kinetic
                reference = 2.0 ** (cfg.p + 1.0) * (2.0 * eta) ** (1.0 - sp) / (sp * (1.0 - sp))
                energies.append(value)
                rows.append({"check": "indicator", "R": None, "r": None, "eta": eta,
                             "value": value, "reference": reference, "margin": abs(value - reference) / reference})
            if len(energies) >= 3:
                fitted["eta"], _, _ = fit_exponent(cfg.eta_list, energies)

    table = pl.DataFrame(rows, schema={
        "check": pl.Utf8, "R": pl.Float64, "r": pl.Float64, "eta": pl.Float64,
        "value": pl.Float64, "reference": pl.Float64, "margin": pl.Float64,
    })
    interaction = table.filter(pl.col("check") == "interaction")
    indicator = table.filter(pl.col("check") == "indicator")
    if interaction.height and interaction["margin"].min() <= 0.0:
        flags.append("interaction_bound_violated")
    if indicator.height and indicator["margin"].max() > INDICATOR_TOL:
        flags.append("indicator_oracle_mismatch")
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height, fitted_exponents=fitted,
        metrics={"delta": delta}, flags=flags, passed=not any(f.endswith(("violated", "mismatch")) for f in flags),
    )
    return table, report


def run_barrier_sweep(cfg: ExperimentConfig) -> Outcome:
    params = _params(cfg)
    table, summary = barrier_energy_sweep(cfg.R_list, params, _spec(cfg), h=cfg.h)
    ratios = table["ratio"]
    spread = float(ratios.max() / ratios.min())
    flags = []
    fitted = {}
    if "exponent" in summary:
        fitted["R"] = summary["exponent"]
        expected = cfg.n - params.sp if params.regime == Regime.SUB else cfg.n - 1.0
        if params.regime != Regime.CRIT and abs(summary["exponent"] - expected) > 0.15:
            flags.append("exponent_off_regime_prediction")
    if spread >= 3.0:
        flags.append("ratio_spread_too_large")
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height, fitted_exponents=fitted,
        metrics={"c_bar": summary["c_bar"], "ratio_spread": spread}, flags=flags, passed=not flags,
    )
    return table, report


def run_minimize(cfg: ExperimentConfig) -> Outcome:
    u, convergence = _minimized(cfg, _spec(cfg))
    table = trace_frame(convergence)
    flags = [] if convergence.converged else [f"solver_{convergence.status.value}"]
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height,
        metrics={"final_energy": convergence.final_energy, "iterations": float(convergence.iterations)},
        flags=flags,
    )
    return table, report


def _density_report(cfg: ExperimentConfig, scan, convergence, table: pl.DataFrame) -> ScanReport:
    flags = [] if convergence.converged else [f"solver_{convergence.status.value}"]
    if not scan.sup_bound_ok:
        flags.append("sup_bound_exceeded")
    return ScanReport(
        experiment=cfg.experiment, rows=table.height,
        fitted_exponents={"r": scan.fitted_exponent},
        metrics={"c_tilde_hat": scan.c_tilde_hat, "r_squared": scan.r_squared, "seed_volume": scan.seed_volume,
                 "theta_star": scan.theta_star, "theta_sup": scan.theta_sup},
        flags=flags, passed=scan.c_tilde_hat > 0.0 and scan.sup_bound_ok,
    )


def run_density_scan(cfg: ExperimentConfig) -> Outcome:
    spec = _spec(cfg, calibrated=True)
    u, convergence = _minimized(cfg, spec)
    scan = density_scan(u, spec, cfg.thetas, cfg.radii, omega_radius=cfg.omega, stable=cfg.stable)
    table = density_frame(scan)
    return table, _density_report(cfg, scan, convergence, table)


def run_full_density_scan(cfg: ExperimentConfig) -> Outcome:
    spec = _spec(cfg, calibrated=True)
    u, convergence = _minimized(cfg, spec)
    scan = full_density_scan(u, spec, cfg.radii, cfg.thetas, _params(cfg), omega_radius=cfg.omega, stable=cfg.stable)
    table = density_frame(scan).with_columns(
        pl.Series("band_bound", scan.band_bounds),
        pl.Series("energy_bound", scan.energy_bounds),
    )
    return table, _density_report(cfg, scan, convergence, table)


def run_gamma_sweep(cfg: ExperimentConfig) -> Outcome:
    v = make_field(_grid(cfg), CosBumpProfile())
    sweep = gamma_sweep(v, cfg.omega, cfg.p, cfg.s_list, _spec(cfg))
    table = gamma_frame(sweep)
    flags = [f"unresolved_s={s:g}" for s, ok in zip(sweep.s_values, sweep.resolved) if not ok]
    tail = [e for e, ok in zip(sweep.relative_errors, sweep.resolved) if ok][-3:]
    if any(b > a for a, b in zip(tail, tail[1:])):
        flags.append("errors_not_decreasing")
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height,
        metrics={"limit": sweep.limit, "local_energy": sweep.local_energy or 0.0,
                 "last_rel_err": sweep.relative_errors[-1]},
        flags=flags,
    )
    return table, report


def run_epsilon_examples(cfg: ExperimentConfig) -> Outcome:
    params = _params(cfg)
    spec = _spec(cfg)
    u = make_field(_grid(cfg), LogBumpProfile(length=cfg.bump_scale))
    measured = total_energy(u, cfg.omega, params, spec)
    if measured.diverged:
        raise DivergenceError(f"E(u_eps, B_{cfg.omega:g}) diverges under refinement at sp={params.sp:g}")

    eps_cert = certify_epsilon(u, cfg.omega, params, spec, measured.total)
    q_cert = certify_Q(u, params, spec, cfg.Q, [cfg.bump_scale], omega_radius=cfg.omega)
    rows = []
    for cert in (eps_cert, q_cert):
        rows.append({
            "kind": cert.kind.value, "Q": cert.Q, "epsilon": cert.epsilon, "E0": cert.E0,
            "implied_epsilon": cert.implied_epsilon, "min_epsilon": cert.min_epsilon,
            "candidates": cert.candidates_tested,
            "worst_violation": cert.worst_violation, "worst_candidate": cert.worst_candidate,
            "passed": cert.passed,
        })
    table = pl.DataFrame(rows, schema={
        "kind": pl.Utf8, "Q": pl.Float64, "epsilon": pl.Float64, "E0": pl.Float64,
        "implied_epsilon": pl.Float64, "min_epsilon": pl.Float64, "candidates": pl.Int64,
        "worst_violation": pl.Float64,
        "worst_candidate": pl.Utf8, "passed": pl.Boolean,
    })
    flags = []
    if not eps_cert.passed:
        flags.append("epsilon_certificate_failed")
    if q_cert.passed:
        flags.append("q_certificate_unexpectedly_passed")
    report = ScanReport(
        experiment=cfg.experiment, rows=table.height,
        metrics={"energy": measured.total, "kinetic": measured.kinetic, "min_epsilon": eps_cert.min_epsilon},
        flags=flags, passed=not flags,
    )
    return table, report


EXPERIMENTS: Dict[ExperimentKind, Experiment] = {
    e.kind: e for e in [
        Experiment(ExperimentKind.POTENTIAL_CHECK, "derivative identity and well condition of the degenerate double well",
                   ("potential.m", "potential.c"), run_potential_check),
        Experiment(ExperimentKind.KERNEL_BOUNDS, "interaction lower bound between a ball and a far exterior, three regimes",
                   ("params.s", "scan.R_list", "scan.radii"), run_kernel_bounds),
        Experiment(ExperimentKind.BARRIER_SWEEP, "energy upper bound for minimizers through the radial barrier",
                   ("params.s", "scan.R_list", "grid.h"), run_barrier_sweep),
        Experiment(ExperimentKind.MINIMIZE, "minimizers with prescribed exterior data",
                   ("params.s", "grid.h", "grid.box_radius", "field.exterior"), run_minimize),
        Experiment(ExperimentKind.DENSITY_SCAN, "density estimate for epsilon-minimizers",
                   ("params.s", "scan.radii", "scan.thetas", "potential.c"), run_density_scan),
        Experiment(ExperimentKind.FULL_DENSITY_SCAN, "volume density estimate under the strengthened lower bound on W",
                   ("params.s", "scan.radii", "potential.c"), run_full_density_scan),
        Experiment(ExperimentKind.GAMMA_SWEEP, "Gamma-limit of (1 - s) energies toward the local p-energy",
                   ("params.s_list", "grid.h"), run_gamma_sweep),
        Experiment(ExperimentKind.EPSILON_EXAMPLES, "epsilon-minimizers that are not quasiminimizers",
                   ("params.s", "field.bump_scale", "certify.Q"), run_epsilon_examples),
    ]
}


def list_experiments(machine: bool = False) -> str:
    """Human-readable listing, or one tab-separated line per experiment"""
    lines = []
    for kind, experiment in EXPERIMENTS.items():
        keys = ", ".join(experiment.required)
        if machine:
            lines.append(f"{kind.value}\t{keys}\t{experiment.anchor}")
        else:
            lines.append(f"{kind.value:<18} verifies: {experiment.anchor}\n{'':<18} requires: {keys}")
    return "\n".join(lines)
