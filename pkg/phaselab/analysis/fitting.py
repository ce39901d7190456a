from typing import Sequence, Tuple
import logging

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from phaselab.errors import InputError

logger = logging.getLogger(__name__)


def fit_exponent(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """
    Least-squares fit of log y = slope * log x + intercept

    Args:
        xs: Abscissae (positive)
        ys: Ordinates (positive)

    Returns:
        (slope, intercept, r2)
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise InputError(f"xs and ys differ in length ({xs.size} vs {ys.size})")
    if xs.size < 3:
        raise InputError(f"need at least 3 points for an exponent fit, got {xs.size}")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0) or not np.all(np.isfinite(ys)):
        raise InputError("exponent fits need finite positive values")

    X = np.log(xs)[:, None]
    y = np.log(ys)
    model = LinearRegression().fit(X, y)
    r2 = float(r2_score(y, model.predict(X))) if np.ptp(y) > 0.0 else 1.0

    slope, intercept = float(model.coef_[0]), float(model.intercept_)
    logger.debug(f"Exponent fit over {xs.size} points: slope={slope:.4f}, r2={r2:.4f}")
    return slope, intercept, r2
