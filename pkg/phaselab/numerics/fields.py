import logging
import math
import re
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Type

import numpy as np

from phaselab.errors import DomainError, InputError
from phaselab.models import Grid, LevelSetReport

logger = logging.getLogger(__name__)

_RADIUS_TOL = 1e-9


# ---------------------------------------------------------------------------
# Grid geometry
# ---------------------------------------------------------------------------

def grid_indices(n: int, half: int) -> np.ndarray:
    """Integer cell indices of [-half, half]^n, flattened in C order, shape (cells, n)"""
    axis = np.arange(-half, half + 1)
    if n == 1:
        return axis[:, None]
    I, J = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([I.ravel(), J.ravel()], axis=1)


def cell_centers(grid: Grid) -> np.ndarray:
    return grid_indices(grid.n, grid.half) * grid.h


def squared_index_norm(grid: Grid) -> np.ndarray:
    idx = grid_indices(grid.n, grid.half)
    return np.sum(idx * idx, axis=1)


def ball_mask(grid: Grid, radius: float) -> np.ndarray:
    """Cells whose centre satisfies |x| < radius, flattened"""
    limit = (radius / grid.h) ** 2
    return squared_index_norm(grid) < limit * (1.0 - _RADIUS_TOL)


def ball_weights(grid: Grid, radius: float, subcells: int = 16) -> np.ndarray:
    """
    Fraction of each cell covered by B_radius.

    Exact in 1D; in 2D a subcells x subcells midpoint rule per cell.
    """
    h = grid.h
    centers = cell_centers(grid)
    if grid.n == 1:
        x = centers[:, 0]
        overlap = np.minimum(x + 0.5 * h, radius) - np.maximum(x - 0.5 * h, -radius)
        return np.clip(overlap, 0.0, h) / h
    offsets = (np.arange(subcells) + 0.5) / subcells - 0.5
    U, V = np.meshgrid(offsets * h, offsets * h, indexing="ij")
    px = centers[:, 0][:, None] + U.ravel()[None, :]
    py = centers[:, 1][:, None] + V.ravel()[None, :]
    return np.mean(px * px + py * py < radius * radius, axis=1)


def _check_radius(grid: Grid, radius: float) -> None:
    if radius > grid.box_radius * (1.0 + _RADIUS_TOL):
        raise DomainError(f"radius {radius} exceeds box_radius {grid.box_radius}")


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# Closed-form profiles
# ---------------------------------------------------------------------------

PROFILE_TYPES: Dict[str, Type["Profile"]] = {}


def register_profile(cls: Type["Profile"]) -> Type["Profile"]:
    PROFILE_TYPES[cls.name] = cls
    return cls


class Profile:
    """
    Closed-form function on R^n with values in [-1, 1].

    Subclasses implement `shape` on points already divided by `length`;
    beyond `settle_radius` every profile equals `far_value`.
    """

    name = "profile"
    far_value = -1.0
    support = 1.0
    radial = True

    def __init__(self, length: float = 1.0):
        self.length = float(length)

    def shape(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.shape(points / self.length)

    @property
    def settle_radius(self) -> float:
        return self.support * self.length

    def params(self) -> Dict[str, float]:
        return {"length": self.length}

    def rescaled(self, factor: float) -> "Profile":
        """Profile of x -> u(x / factor)"""
        params = self.params()
        params["length"] = self.length * factor
        return type(self)(**params)

    def describe(self) -> str:
        inner = ",".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.name}({inner})"

    def default_exterior(self, box_radius: float) -> "Exterior":
        if self.settle_radius <= box_radius:
            return Exterior.constant(self.far_value)
        return Exterior.from_profile(self)


@register_profile
class ConstantProfile(Profile):
    name = "constant"
    support = 0.0

    def __init__(self, value: float, length: float = 1.0):
        super().__init__(length)
        self.value = float(value)
        self.far_value = self.value

    def shape(self, points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[0], self.value)

    def params(self) -> Dict[str, float]:
        return {"value": self.value, "length": self.length}


@register_profile
class IndicatorProfile(Profile):
    """u_eta: 1 on B_eta, -1 elsewhere"""
    name = "indicator"

    def __init__(self, eta: float, length: float = 1.0):
        super().__init__(length)
        self.eta = float(eta)
        self.support = self.eta

    def shape(self, points: np.ndarray) -> np.ndarray:
        return np.where(np.linalg.norm(points, axis=1) < self.eta, 1.0, -1.0)

    def params(self) -> Dict[str, float]:
        return {"eta": self.eta, "length": self.length}


@register_profile
class LogBumpProfile(Profile):
    """1 on B_(e^-2), |ln|x|| - 1 on the annulus up to B_1, -1 outside"""
    name = "logbump"

    def shape(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points, axis=1)
        out = np.full(r.shape, -1.0)
        inner = r <= math.exp(-2.0)
        ring = (r > math.exp(-2.0)) & (r < 1.0)
        out[inner] = 1.0
        out[ring] = np.abs(np.log(r[ring])) - 1.0
        return out


@register_profile
class CosBumpProfile(Profile):
    """cos^2(pi |x| / 2) on B_1, zero outside"""
    name = "cosbump"
    far_value = 0.0

    def shape(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points, axis=1)
        return np.where(r < 1.0, np.cos(0.5 * math.pi * r) ** 2, 0.0)


@register_profile
class TwoPhaseProfile(Profile):
    """-1 left of the jump, +1 right of it (first coordinate)"""
    name = "twophase"
    radial = False

    def __init__(self, jump: float = 0.0, length: float = 1.0):
        super().__init__(length)
        self.jump = float(jump)
        self.support = abs(self.jump)

    def shape(self, points: np.ndarray) -> np.ndarray:
        return np.where(points[:, 0] < self.jump, -1.0, 1.0)

    def params(self) -> Dict[str, float]:
        return {"jump": self.jump, "length": self.length}

    def default_exterior(self, box_radius: float) -> "Exterior":
        return Exterior.two_phase()


@register_profile
class RampProfile(Profile):
    """clip(x_1, -1, 1)"""
    name = "ramp"
    radial = False

    def shape(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points[:, 0], -1.0, 1.0)

    def default_exterior(self, box_radius: float) -> "Exterior":
        return Exterior.two_phase()


def parse_profile(text: str) -> Profile:
    match = re.fullmatch(r"(\w+)\((.*)\)", text)
    if match is None or match.group(1) not in PROFILE_TYPES:
        raise InputError(f"unknown profile description {text!r}")
    kwargs = {}
    if match.group(2):
        for item in match.group(2).split(","):
            key, value = item.split("=")
            kwargs[key] = float(value)
    return PROFILE_TYPES[match.group(1)](**kwargs)


# ---------------------------------------------------------------------------
# Exterior data
# ---------------------------------------------------------------------------

class ExteriorKind(str, Enum):
    CONSTANT = "const"
    SIGN = "sign"
    PROFILE = "profile"


class Exterior:
    """Closed-form values of u outside the computational box"""

    def __init__(self, kind: ExteriorKind, left: float = -1.0, right: float = -1.0,
                 profile: Optional[Profile] = None):
        self.kind = kind
        self.left = float(left)
        self.right = float(right)
        self.profile = profile
        for value in (self.left, self.right):
            if abs(value) > 1.0:
                raise InputError(f"exterior value {value} outside [-1, 1]")

    @classmethod
    def constant(cls, value: float) -> "Exterior":
        return cls(ExteriorKind.CONSTANT, value, value)

    @classmethod
    def two_phase(cls, left: float = -1.0, right: float = 1.0) -> "Exterior":
        return cls(ExteriorKind.SIGN, left, right)

    @classmethod
    def from_profile(cls, profile: Profile) -> "Exterior":
        far = profile.far_value
        return cls(ExteriorKind.PROFILE, far, far, profile)

    @property
    def is_constant(self) -> bool:
        return self.kind == ExteriorKind.CONSTANT

    @property
    def settle_radius(self) -> float:
        return self.profile.settle_radius if self.kind == ExteriorKind.PROFILE else 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == ExteriorKind.CONSTANT:
            return np.full(points.shape[0], self.left)
        if self.kind == ExteriorKind.SIGN:
            return np.where(points[:, 0] < 0.0, self.left, self.right)
        return self.profile(points)

    def rescaled(self, factor: float) -> "Exterior":
        if self.kind != ExteriorKind.PROFILE:
            return self
        return Exterior.from_profile(self.profile.rescaled(factor))

    def describe(self) -> str:
        if self.kind == ExteriorKind.CONSTANT:
            return f"const:{self.left!r}"
        if self.kind == ExteriorKind.SIGN:
            return f"sign:{self.left!r},{self.right!r}"
        return f"profile:{self.profile.describe()}"

    @classmethod
    def parse(cls, text: str) -> "Exterior":
        kind, _, body = text.partition(":")
        if kind == ExteriorKind.CONSTANT.value:
            return cls.constant(float(body))
        if kind == ExteriorKind.SIGN.value:
            left, right = body.split(",")
            return cls.two_phase(float(left), float(right))
        if kind == ExteriorKind.PROFILE.value:
            return cls.from_profile(parse_profile(body))
        raise InputError(f"unknown exterior description {text!r}")

    def matches(self, other: "Exterior") -> bool:
        return self.describe() == other.describe()

    def __repr__(self) -> str:
        return f"Exterior({self.describe()})"


# ---------------------------------------------------------------------------
# Field
# ---------------------------------------------------------------------------

class Field:
    """Piecewise-constant function on the grid cells plus closed-form exterior data"""

    def __init__(self, grid: Grid, values: np.ndarray, exterior: Exterior,
                 clamp_count: int = 0, profile: Optional[Profile] = None):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != grid.cell_count ** grid.n:
            raise InputError(f"expected {grid.cell_count ** grid.n} values, got {values.size}")
        if np.any(np.isnan(values)):
            raise InputError("field values contain NaN")
        if np.any(np.abs(values) > 1.0):
            raise InputError("field values must lie in [-1, 1]")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.exterior = exterior
        self.clamp_count = clamp_count
        self.profile = profile

    @property
    def points(self) -> np.ndarray:
        return cell_centers(self.grid)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.exterior)

    def refined(self) -> "Field":
        """Same closed-form data sampled at h / 2"""
        if self.profile is None:
            raise InputError("field has no closed-form profile to refine")
        fine = Grid(n=self.grid.n, h=self.grid.h / 2.0, cell_count=4 * self.grid.half + 1)
        return make_field(fine, self.profile, self.exterior)

    def __repr__(self) -> str:
        return f"Field(n={self.grid.n}, h={self.grid.h}, cells={self.values.size}, {self.exterior!r})"


def make_field(grid: Grid, profile: Callable[[np.ndarray], np.ndarray],
               exterior: Optional[Exterior] = None) -> Field:
    """
    Sample a closed-form profile at cell centres.

    Args:
        grid: Target grid
        profile: Profile instance (or any callable on (cells, n) points)
        exterior: Exterior data; defaults to the profile's own

    Returns:
        Field with values clamped to [-1, 1] and the clamp count recorded
    """
    values = np.asarray(profile(cell_centers(grid)), dtype=float).reshape(-1)
    if np.any(np.isnan(values)):
        raise InputError("profile returned NaN")
    clamped = np.clip(values, -1.0, 1.0)
    clamp_count = int(np.count_nonzero(clamped != values))
    if clamp_count:
        logger.warning(f"Clamped {clamp_count} samples into [-1, 1]")
    if exterior is None:
        if not isinstance(profile, Profile):
            raise InputError("exterior data is required for a plain callable profile")
        exterior = profile.default_exterior(grid.box_radius)
    return Field(grid, clamped, exterior, clamp_count, profile if isinstance(profile, Profile) else None)


def constant_field(grid: Grid, value: float) -> Field:
    return make_field(grid, ConstantProfile(value), Exterior.constant(value))


def rescale_field(u: Field, r: float) -> Field:
    """u_r(x) = u(r x): same cell values on the grid with spacing h / r"""
    grid = Grid(n=u.grid.n, h=u.grid.h / r, cell_count=u.grid.cell_count)
    profile = u.profile.rescaled(1.0 / r) if u.profile is not None else None
    return Field(grid, u.values, u.exterior.rescaled(1.0 / r), u.clamp_count, profile)


# ---------------------------------------------------------------------------
# Level sets
# ---------------------------------------------------------------------------

def level_set_volume(u: Field, threshold: float, radius: float) -> float:
    """|B_radius n {u > threshold}| for the piecewise-constant field"""
    _check_radius(u.grid, radius)
    weights = ball_weights(u.grid, radius)
    return math.fsum(weights[u.values > threshold]) * u.grid.cell_volume


def level_set_report(u: Field, threshold: float, radii: List[float]) -> LevelSetReport:
    volumes = [level_set_volume(u, threshold, r) for r in radii]
    return LevelSetReport(threshold=threshold, radii=list(radii), volumes=volumes)


def interface_integral(u: Field, theta_lo: float, theta_hi: float, radius: float, m: float) -> float:
    """Cell sum of |1 + u|^m over B_radius n {theta_lo < u <= theta_hi}"""
    if not -1.0 < theta_lo < theta_hi < 1.0:
        raise DomainError(f"band ({theta_lo}, {theta_hi}] must satisfy -1 < lo < hi < 1")
    _check_radius(u.grid, radius)
    band = (u.values > theta_lo) & (u.values <= theta_hi)
    weights = ball_weights(u.grid, radius)[band]
    return math.fsum(weights * np.abs(1.0 + u.values[band]) ** m) * u.grid.cell_volume


# ---------------------------------------------------------------------------
# Rearrangement
# ---------------------------------------------------------------------------

def _boundary_mask(grid: Grid) -> np.ndarray:
    idx = grid_indices(grid.n, grid.half)
    return np.any(np.abs(idx) == grid.half, axis=1)


def symmetric_decreasing_rearrangement(u: Field) -> Field:
    """
    Radially nonincreasing field with the same distribution function.

    Sorted values are dealt out to cells ordered by |x|, ties broken by
    flat index. The field must sit on a constant exterior equal to its
    minimum, with the outermost ring of cells already at that level.
    """
    if not u.exterior.is_constant:
        raise DomainError("rearrangement needs constant exterior data")
    base = u.exterior.left
    if u.values.min() < base:
        raise DomainError(f"field dips below its exterior level {base}")
    if np.any(u.values[_boundary_mask(u.grid)] != base):
        raise DomainError("support touches the box boundary; rearrangement would leak")

    order = np.lexsort((np.arange(u.values.size), squared_index_norm(u.grid)))
    rearranged = np.empty_like(u.values)
    rearranged[order] = np.sort(u.values)[::-1]
    return Field(u.grid, rearranged, u.exterior)


# ---------------------------------------------------------------------------
# Flat text table
# ---------------------------------------------------------------------------

def write_field(u: Field, path: Path) -> None:
    """Header `n h box_radius exterior`, then `index value` per cell"""
    path = Path(path)
    lines = [f"{u.grid.n} {u.grid.h!r} {u.grid.box_radius!r} {u.exterior.describe()}"]
    lines.extend(f"{i} {float(v)!r}" for i, v in enumerate(u.values))
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"Field written to {path}")


def read_field(path: Path) -> Field:
    path = Path(path)
    lines = path.read_text().splitlines()
    try:
        n_text, h_text, box_text, ext_text = lines[0].split(" ", 3)
        grid = Grid.from_radius(int(n_text), float(h_text), float(box_text))
        size = grid.cell_count ** grid.n
        values = np.full(size, np.nan)
        seen = np.zeros(size, dtype=bool)
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            index_text, value = line.split()
            index = int(index_text)
            if not 0 <= index < size:
                raise InputError(f"{path}:{number}: index {index} outside 0..{size - 1}")
            if seen[index]:
                raise InputError(f"{path}:{number}: index {index} repeated")
            seen[index] = True
            values[index] = float(value)
    except InputError:
        raise
    except (ValueError, IndexError) as e:
        raise InputError(f"malformed field file {path}: {e}") from e
    missing = size - int(np.count_nonzero(seen))
    if missing:
        raise InputError(f"field file {path} is missing {missing} of {size} cells")
    return Field(grid, values, Exterior.parse(ext_text))
