import logging
import re
from pathlib import Path
from typing import Any, Dict, Tuple

from pydantic import ValidationError

from phaselab.errors import ConfigError
from phaselab.models import ExperimentConfig

logger = logging.getLogger(__name__)

# section.key -> ExperimentConfig field
KEY_MAP: Dict[str, str] = {
    "experiment.kind": "experiment",
    "params.n": "n",
    "params.s": "s",
    "params.s_list": "s_list",
    "params.p": "p",
    "potential.m": "m",
    "potential.normalization": "normalization",
    "potential.scale": "scale",
    "potential.c": "c",
    "grid.h": "h",
    "grid.box_radius": "box_radius",
    "grid.omega_radius": "omega_radius",
    "scan.radii": "radii",
    "scan.R_list": "R_list",
    "scan.eta_list": "eta_list",
    "scan.thetas": "thetas",
    "scan.stable": "stable",
    "scan.samples": "samples",
    "field.exterior": "exterior",
    "field.bump_scale": "bump_scale",
    "certify.Q": "Q",
    "solver.max_iters": "max_iters",
    "run.seed": "seed",
    "output.path": "output_path",
}

LIST_FIELDS = {"s_list", "radii", "R_list", "eta_list", "thetas"}

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(.*?)\s*$")


def parse_lines(text: str, source: str = "<config>") -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Parse `section.key = value` lines.

    Blank lines and lines starting with # are skipped. Comma-separated
    values become lists for list-valued keys.

    Returns:
        (raw ExperimentConfig kwargs, field name -> line number)
    """
    data: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _LINE.match(line)
        if match is None:
            raise ConfigError(f"{source}:{number}: expected 'section.key = value', got {stripped!r}")
        key, value = match.groups()
        if key not in KEY_MAP:
            raise ConfigError(f"{source}:{number}: unknown key {key!r}")
        name = KEY_MAP[key]
        if name in lines:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r} (first set on line {lines[name]})")
        if value == "":
            raise ConfigError(f"{source}:{number}: empty value for {key!r}")
        if name in LIST_FIELDS:
            data[name] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            data[name] = value
        lines[name] = number
    return data, lines


def _blame_line(message: str, lines: Dict[str, int]) -> int:
    """Line of the first configured field named in a model-level message"""
    best, position = lines.get("experiment", 0), len(message) + 1
    for name, number in lines.items():
        match = re.search(rf"\b{re.escape(name)}\b", message)
        if match is not None and match.start() < position:
            best, position = number, match.start()
    return best


def build_config(text: str, source: str = "<config>") -> ExperimentConfig:
    data, lines = parse_lines(text, source)
    if "experiment" not in data:
        raise ConfigError(f"{source}: missing required key 'experiment.kind'")
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        error = e.errors()[0]
        message = error["msg"].removeprefix("Value error, ")
        field = error["loc"][0] if error["loc"] else None
        number = lines.get(field) if isinstance(field, str) else None
        if number is None:
            number = _blame_line(message, lines)
        logger.error(f"Invalid configuration {source}:{number}: {message}")
        raise ConfigError(f"{source}:{number}: {message}") from e


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return build_config(path.read_text(), str(path))


def dump_config(config: ExperimentConfig) -> str:
    """Fully resolved config in the same `section.key = value` format"""
    values = config.model_dump(mode="json")
    out = []
    for key, name in KEY_MAP.items():
        value = values.get(name)
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
