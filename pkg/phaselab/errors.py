"""Exception hierarchy shared by the numerics, analysis and CLI layers"""


class LabError(Exception):
    """Base class for every error raised by phaselab"""

    exit_code: int = 1


class DomainError(LabError, ValueError):
    """An argument lies outside the domain where the quantity is defined"""

    exit_code = 2


class ConfigError(LabError, ValueError):
    """A configuration value is missing, malformed or inconsistent"""

    exit_code = 2


class InputError(LabError, ValueError):
    """User-supplied data (profiles, fields, candidates) is unusable"""

    exit_code = 2


class CalibrationError(LabError, RuntimeError):
    """No admissible well parameters were found"""

    exit_code = 4


class DivergenceError(LabError, RuntimeError):
    """A kinetic estimate keeps growing under grid refinement"""

    exit_code = 3


class SeedConditionError(LabError, RuntimeError):
    """The nondegeneracy hypothesis of a density estimate is not met"""

    exit_code = 4


class CertificationError(LabError, RuntimeError):
    """A minimality certificate or an energy bound failed"""

    exit_code = 4
