from pydantic_settings import BaseSettings
from pathlib import Path


class Settings(BaseSettings):
    """Laboratory-wide numerical and runtime settings"""

    # Application
    APP_NAME: str = "PhaseLab"
    APP_VERSION: str = "1.0.0"

    # Paths
    OUTPUT_DIR: Path = Path("./runs")

    # Kernel quadrature
    TAIL_FACTOR: float = 2.0  # tail_radius / box_radius
    NEAR_FIELD_RADIUS: int = 6  # offsets (in cells) integrated by quadrature in 2D
    KERNEL_CHUNK_ROWS: int = 256
    KERNEL_CACHE_PAIRS: int = 4_000_000  # keep pair weights in memory below this many pairs
    QUAD_EPSREL: float = 1e-10
    TAIL_LEGENDRE_NODES: int = 64

    # Finite differences
    FD_STEP: float = 1e-3
    FD_ORDER: int = 4
    FD_ENDPOINT_GUARD: int = 10  # keep stencils 10 steps away from x = +-1

    # Well-condition calibration
    CALIBRATION_SAMPLES: int = 2001
    CALIBRATION_FLOOR_EXP: int = 20  # bisection stops at 2**-20
    WELL_SLACK_TOL: float = 1e-12

    # Minimizer defaults
    MAX_ITERS: int = 2000
    GRAD_TOL: float = 1e-9
    STEP_INIT: float = 1.0
    BACKTRACK: float = 0.5
    ARMIJO: float = 1e-4
    MIN_STEP: float = 1e-14

    # Divergence detection
    DIVERGENCE_RATIO: float = 1.2  # E(h/2) / E(h) above this flags divergence

    # Gamma sweeps
    RESOLUTION_FACTOR: float = 4.0  # s must satisfy s <= 1 - RESOLUTION_FACTOR * h

    # Reproducibility
    RANDOM_SEED: int = 42
    CANDIDATE_PERTURBATIONS: int = 8

    # Parallelism
    N_JOBS: int = 1

    # Logging
    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "PHASELAB_"


settings = Settings()
