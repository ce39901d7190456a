import logging
import platform
import time
from pathlib import Path
from typing import Dict, Optional

import joblib
import numpy as np
import polars as pl
import pydantic
import scipy
import sklearn
import sympy

from phaselab import __version__
from phaselab.cli.config_file import dump_config
from phaselab.cli.experiments import EXPERIMENTS
from phaselab.config import settings
from phaselab.errors import LabError
from phaselab.models import ExperimentConfig, RunManifest, ScanReport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIVERGENCE = 3
EXIT_CERTIFICATION = 4


def versions() -> Dict[str, str]:
    return {
        "phaselab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "polars": pl.__version__,
        "scikit-learn": sklearn.__version__,
        "joblib": joblib.__version__,
        "pydantic": pydantic.VERSION,
    }


def write_table(table: pl.DataFrame, config: ExperimentConfig, path: Path) -> None:
    """CSV preceded by the resolved config as `# section.key = value` lines"""
    header = "".join(f"# {line}\n" for line in dump_config(config).splitlines())
    path.write_text(header + table.write_csv())


def exit_code_for(report: ScanReport) -> int:
    if any("diverged" in flag for flag in report.flags):
        return EXIT_DIVERGENCE
    return EXIT_OK if report.passed else EXIT_CERTIFICATION


def run(
    config: ExperimentConfig,
    output_dir: Optional[Path] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> int:
    """
    Run one experiment and write its CSV table plus a JSON run manifest.

    Args:
        config: Validated experiment configuration
        output_dir: Directory for the artifacts (defaults to settings.OUTPUT_DIR)
        seed: Overrides the config seed
        threads: joblib workers (0 = all cores)

    Returns:
        Process exit code
    """
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    if threads is not None:
        settings.N_JOBS = threads
    settings.RANDOM_SEED = config.seed

    output_dir = Path(output_dir) if output_dir is not None else settings.OUTPUT_DIR
    output_dir.mkdir(parents=True, exist_ok=True)
    table_path = output_dir / config.output_path
    manifest_path = table_path.with_suffix(".manifest.json")

    experiment = EXPERIMENTS[config.experiment]
    logger.info(f"Running {config.experiment.value} (seed {config.seed}) into {output_dir}")
    start_time = time.time()
    outputs = []
    summary = None

    try:
        table, summary = experiment.runner(config)
        write_table(table, config, table_path)
        outputs.append(str(table_path))
        exit_code = exit_code_for(summary)
        if summary.flags:
            logger.warning(f"Flags raised: {', '.join(summary.flags)}")
    except LabError as e:
        logger.error(f"{config.experiment.value} failed: {e}")
        exit_code = e.exit_code

    wall_time = time.time() - start_time
    manifest = RunManifest(
        experiment=config.experiment,
        config=config.model_dump(mode="json"),
        seed=config.seed,
        versions=versions(),
        wall_time=wall_time,
        outputs=outputs + [str(manifest_path)],
        exit_code=exit_code,
        summary=summary,
    )
    manifest_path.write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Finished {config.experiment.value} in {wall_time:.2f}s with exit code {exit_code}")
    return exit_code
