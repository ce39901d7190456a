import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from phaselab.config import settings


class Normalization(str, Enum):
    """Normalization of the prototype potential W_m"""
    INTRO = "intro"  # (1 - x^2)^m / (2m)
    APPENDIX = "appendix"  # (1 - x^2)^m


class SingularRule(str, Enum):
    """Near-diagonal treatment of the kernel |x - y|^(-n - sp)"""
    EXACT_NEIGHBOR_1D = "exact_neighbor_1d"
    POLAR_DESING_2D = "polar_desing_2d"


class Regime(str, Enum):
    """Position of s relative to 1/p"""
    SUB = "sub"
    CRIT = "crit"
    SUPER = "super"


class CertificateKind(str, Enum):
    EPSILON = "epsilon"
    Q = "q"


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STAGNATED = "stagnated"


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class ExperimentKind(str, Enum):
    POTENTIAL_CHECK = "potential_check"
    KERNEL_BOUNDS = "kernel_bounds"
    BARRIER_SWEEP = "barrier_sweep"
    MINIMIZE = "minimize"
    DENSITY_SCAN = "density_scan"
    FULL_DENSITY_SCAN = "full_density_scan"
    GAMMA_SWEEP = "gamma_sweep"
    EPSILON_EXAMPLES = "epsilon_examples"


def order_k(m: float) -> int:
    """Order k of the well condition: m if m is an integer, floor(m) + 1 otherwise"""
    return int(m) if float(m).is_integer() else math.floor(m) + 1


def normalization_factor(m: float, normalization: Normalization) -> float:
    return 1.0 / (2.0 * m) if normalization == Normalization.INTRO else 1.0


class PotentialSpec(BaseModel):
    """Double-well potential W = scale * W_m with its structural constants"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    m: float = Field(..., gt=1.0, description="Growth exponent from the wells")
    lam: Optional[float] = Field(None, gt=0.0, le=1.0, description="Lower sandwich constant lambda")
    Lam: Optional[float] = Field(None, ge=1.0, description="Upper sandwich constant Lambda")
    theta: float = Field(0.0, gt=-1.0, lt=1.0, description="Threshold of the lower sandwich bound")
    c1: Optional[float] = Field(None, gt=0.0, description="Well-condition constant c_1")
    q: Optional[float] = Field(None, gt=0.0, description="Width of the well region [-1, -1 + q]")
    k: Optional[int] = Field(None, ge=1, description="Order of the well condition")
    normalization: Normalization = Field(Normalization.INTRO, description="Normalization of W_m")
    scale: float = Field(1.0, gt=0.0, description="Amplitude of W (blow-down rescaling factor)")
    hook: Optional[Any] = Field(None, exclude=True, description="Plug-in evaluator with value/derivative")

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "m" not in data:
            return data
        data = dict(data)
        m = float(data["m"])
        norm = normalization_factor(m, Normalization(data.get("normalization", Normalization.INTRO)))
        scale = float(data.get("scale", 1.0))
        theta = float(data.get("theta", 0.0))
        if data.get("k") is None:
            data["k"] = order_k(m)
        if data.get("lam") is None:
            data["lam"] = min(1.0, norm * scale * min(2.0 ** (-m), (1.0 - theta) ** m))
        if data.get("Lam") is None:
            data["Lam"] = max(1.0, norm * scale * 2.0 ** m)
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "PotentialSpec":
        if self.k != order_k(self.m):
            raise ValueError(f"k={self.k} inconsistent with m={self.m}; expected {order_k(self.m)}")
        if self.lam > self.Lam:
            raise ValueError(f"lambda={self.lam} exceeds Lambda={self.Lam}")
        return self

    @property
    def norm(self) -> float:
        """Prefactor multiplying (1 - x^2)^m"""
        return normalization_factor(self.m, self.normalization) * self.scale


class Grid(BaseModel):
    """Uniform cell grid on [-box_radius, box_radius]^n with the origin as a cell centre"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, le=2, description="Dimension")
    h: float = Field(..., gt=0.0, description="Cell width")
    cell_count: int = Field(..., ge=3, description="Cells per axis (odd)")

    @model_validator(mode="after")
    def _odd(self) -> "Grid":
        if self.cell_count % 2 == 0:
            raise ValueError(f"cell_count must be odd, got {self.cell_count}")
        return self

    @classmethod
    def from_radius(cls, n: int, h: float, box_radius: float) -> "Grid":
        half = int(round(box_radius / h))
        return cls(n=n, h=h, cell_count=2 * max(half, 1) + 1)

    @property
    def half(self) -> int:
        return (self.cell_count - 1) // 2

    @property
    def box_radius(self) -> float:
        return self.h * self.half

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cell_count,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n


class EnergyParams(BaseModel):
    """Fractional parameters and quadrature controls"""
    model_config = ConfigDict(frozen=True)

    s: float = Field(..., gt=0.0, lt=1.0, description="Fractional order")
    p: float = Field(..., gt=1.0, description="Integrability exponent")
    n: int = Field(1, ge=1, le=2, description="Dimension")
    tail_factor: float = Field(settings.TAIL_FACTOR, ge=2.0, description="tail_radius / box_radius")
    singular_rule: Optional[SingularRule] = Field(None, description="Near-diagonal rule")

    @model_validator(mode="before")
    @classmethod
    def _default_rule(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("singular_rule") is None:
            data = dict(data)
            n = int(data.get("n", 1))
            data["singular_rule"] = SingularRule.EXACT_NEIGHBOR_1D if n == 1 else SingularRule.POLAR_DESING_2D
        return data

    @model_validator(mode="after")
    def _rule_matches_dimension(self) -> "EnergyParams":
        expected = SingularRule.EXACT_NEIGHBOR_1D if self.n == 1 else SingularRule.POLAR_DESING_2D
        if self.singular_rule != expected:
            raise ValueError(f"singular rule {self.singular_rule.value} does not apply in dimension {self.n}")
        return self

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def regime(self) -> Regime:
        if math.isclose(self.sp, 1.0, rel_tol=1e-12, abs_tol=1e-12):
            return Regime.CRIT
        return Regime.SUB if self.sp < 1.0 else Regime.SUPER


class EnergyBreakdown(BaseModel):
    """Parts of E_s^p(u, Omega) = (1 - s) K_s^p(u, Omega) + int_Omega W(u)"""
    kinetic_interior: float = Field(..., description="1/2 int_Omega int_Omega term")
    kinetic_cross: float = Field(..., description="int_Omega int_(R^n minus Omega) term")
    potential: float = Field(0.0, description="int_Omega W(u)")
    total: float = Field(..., description="(1 - s)(interior + cross) + potential")
    s: float = Field(..., description="Fractional order used for the prefactor")
    diverged: bool = Field(False, description="Refinement indicates an infinite kinetic term")

    @property
    def kinetic(self) -> float:
        return self.kinetic_interior + self.kinetic_cross

    @property
    def full_inner(self) -> float:
        """int_Omega int_(R^n) of the kernel integrand"""
        return 2.0 * self.kinetic_interior + self.kinetic_cross


class MinimizeConfig(BaseModel):
    """Projected-gradient solver controls"""
    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(settings.MAX_ITERS, ge=1)
    grad_tol: float = Field(settings.GRAD_TOL, gt=0.0)
    step_init: float = Field(settings.STEP_INIT, gt=0.0)
    backtracking: float = Field(settings.BACKTRACK, gt=0.0, lt=1.0)
    armijo: float = Field(settings.ARMIJO, gt=0.0, lt=1.0)
    seed: int = Field(settings.RANDOM_SEED)


class ConvergenceReport(BaseModel):
    status: SolverStatus
    iterations: int
    energies: List[float] = Field(default_factory=list, description="Energy of every accepted iterate")
    grad_norms: List[float] = Field(default_factory=list)
    steps: List[float] = Field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == SolverStatus.CONVERGED

    @property
    def final_energy(self) -> float:
        return self.energies[-1]


class MinimalityCertificate(BaseModel):
    """Outcome of testing a field against a finite competitor suite"""
    kind: CertificateKind
    epsilon: Optional[float] = Field(None, description="Tolerance of an epsilon certificate")
    Q: Optional[float] = Field(None, description="Quasiminimality constant")
    E0: Optional[float] = Field(None, description="Measured E(u, Omega)")
    implied_epsilon: Optional[float] = Field(None, description="(Q - 1) E0")
    min_epsilon: Optional[float] = Field(None, description="Smallest epsilon the tested suite admits, max(0, E(u) - min E(v))")
    candidates_tested: int
    worst_violation: float
    worst_candidate: str = ""
    passed: bool


class LevelSetReport(BaseModel):
    threshold: float
    radii: List[float]
    volumes: List[float]


class RegimeBound(BaseModel):
    regime: Regime
    value: float
    R: float
    c_bar: float = 1.0


class BoundCheck(BaseModel):
    """Computable chain E(u, B_R) <= E(psi, B_(R+2)) + (1 - s) u(B_R, complement of B_(R+1))"""
    status: CheckStatus
    lhs: float
    rhs: float
    psi_energy: float
    cross_term: float
    margin: float


class DensityScan(BaseModel):
    theta1: float
    theta2: float
    theta_star: float
    theta_sup: float
    band_weight: float = Field(..., description="c_(m, theta_*) = (1 + theta_*)^(-m)")
    radii: List[float]
    V_values: List[float]
    interface_values: List[float]
    lhs_values: List[float]
    lhs_over_rn: List[float]
    fitted_exponent: float
    r_squared: float
    c_tilde_hat: float
    seed_volume: float
    sup_bound_ok: bool = True
    band_bounds: Optional[List[float]] = Field(None, description="lambda_(theta^*)^-1 E(u, B_r)")
    energy_bounds: Optional[List[float]] = Field(None, description="lambda_(theta^*)^-1 F(r)")


class GammaSweep(BaseModel):
    s_values: List[float]
    measured: List[float]
    limit: float
    relative_errors: List[float]
    resolved: List[bool]
    energies: List[float] = Field(default_factory=list, description="E_s^p(v, Omega)")
    local_energy: Optional[float] = Field(None, description="E_1^p(v, Omega)")


class ScanReport(BaseModel):
    """Summary of one experiment table"""
    experiment: ExperimentKind
    rows: int
    fitted_exponents: Dict[str, float] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict, description="Scalar outcomes (constants, margins)")
    flags: List[str] = Field(default_factory=list)
    passed: bool = True


class ExperimentConfig(BaseModel):
    """Declarative description of one CLI run"""
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    n: int = Field(1, ge=1, le=2)
    s: Optional[float] = Field(None, gt=0.0, lt=1.0)
    s_list: Optional[List[float]] = None
    p: float = Field(2.0, gt=1.0)
    m: float = Field(2.0, gt=1.0)
    normalization: Normalization = Normalization.INTRO
    scale: float = Field(1.0, gt=0.0)
    c: float = Field(0.5, gt=0.0, lt=1.0, description="Calibration level for P_m^k")
    h: float = Field(0.1, gt=0.0)
    box_radius: float = Field(8.0, gt=0.0)
    omega_radius: Optional[float] = Field(None, gt=0.0)
    radii: Optional[List[float]] = None
    R_list: Optional[List[float]] = None
    eta_list: Optional[List[float]] = None
    thetas: Tuple[float, float] = (0.0, 0.0)
    stable: bool = Field(False, description="Use the B_(4r) variant of the density estimate")
    exterior: str = Field("two_phase", description="minus_one, plus_one or two_phase")
    bump_scale: float = Field(0.25, gt=0.0, lt=1.0, description="epsilon of the rescaled bump u_epsilon")
    Q: float = Field(2.0, ge=1.0)
    samples: int = Field(200, ge=2)
    max_iters: int = Field(settings.MAX_ITERS, ge=1)
    seed: int = settings.RANDOM_SEED
    output_path: str = "result.csv"

    @model_validator(mode="after")
    def _check_experiment(self) -> "ExperimentConfig":
        kind = self.experiment
        needs_s = kind not in (ExperimentKind.POTENTIAL_CHECK, ExperimentKind.GAMMA_SWEEP)
        if needs_s and self.s is None:
            raise ValueError(f"experiment {kind.value} requires s")
        if kind == ExperimentKind.GAMMA_SWEEP and not self.s_list:
            raise ValueError("gamma_sweep requires s_list")
        if self.s_list is not None and any(b <= a for a, b in zip(self.s_list, self.s_list[1:])):
            raise ValueError("s_list must be strictly increasing")
        if self.exterior not in ("minus_one", "plus_one", "two_phase"):
            raise ValueError(f"unknown exterior {self.exterior!r}")
        uses_exterior = kind in (ExperimentKind.MINIMIZE, ExperimentKind.DENSITY_SCAN, ExperimentKind.FULL_DENSITY_SCAN)
        if uses_exterior and self.exterior == "two_phase" and self.n != 1:
            raise ValueError("two_phase exterior data is one-dimensional")
        omega = self.omega_radius if self.omega_radius is not None else self.box_radius
        if omega > self.box_radius:
            raise ValueError(f"omega_radius={omega} exceeds box_radius={self.box_radius}")
        if kind in (ExperimentKind.DENSITY_SCAN, ExperimentKind.FULL_DENSITY_SCAN):
            if not self.radii:
                raise ValueError(f"{kind.value} requires radii")
            factor = 4.0 if self.stable else 3.0
            limit = omega / factor
            if max(self.radii) > limit:
                ball = "B_4r" if self.stable else "B_3r"
                raise ValueError(
                    f"radius {max(self.radii)} violates {ball} inside Omega: "
                    f"radii must not exceed omega_radius/{factor:g} = {limit:g}"
                )
        if kind == ExperimentKind.BARRIER_SWEEP:
            if not self.R_list or min(self.R_list) < 2.0:
                raise ValueError("barrier_sweep requires R_list with every R >= 2")
            if self.h > 0.25:
                raise ValueError(f"h={self.h} under-resolves the unit ramp of psi (need h <= 0.25)")
        return self

    @property
    def omega(self) -> float:
        return self.omega_radius if self.omega_radius is not None else self.box_radius


class RunManifest(BaseModel):
    """Everything needed to reconstruct a run"""
    experiment: ExperimentKind
    config: Dict[str, Any]
    seed: int
    versions: Dict[str, str]
    wall_time: float
    outputs: List[str]
    exit_code: int
    summary: Optional[ScanReport] = None
