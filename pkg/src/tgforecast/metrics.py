"""Point-forecast error metrics: MAE, RMSE, MAPE and R^2."""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, UndefinedMetricError

METRICS = ("MAE", "RMSE", "MAPE", "R2")


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise EmptyInputError("metrics need at least one sample")
    if y.shape != y_hat.shape:
        raise EmptyInputError(f"actual ({y.size}) and predicted ({y_hat.size}) lengths differ")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    r = np.abs(y - y_hat)
    scale = r.max()
    if scale == 0:
        return 0.0
    # scaled like hypot so tiny or huge residuals do not under/overflow when squared
    return float(scale * np.sqrt(np.mean((r / scale) ** 2)))


def mape(y, y_hat) -> tuple[float, int]:
    """Percentage error over non-zero targets; returns ``(value, skipped_zero_count)``."""
    y, y_hat = _pair(y, y_hat)
    keep = y != 0
    if not keep.any():
        raise UndefinedMetricError("MAPE undefined: every target is zero")
    value = 100.0 * np.mean(np.abs(y[keep] - y_hat[keep]) / np.abs(y[keep]))
    return float(value), int((~keep).sum())


def r2(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise EmptyInputError("R^2 needs at least two samples")
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        raise UndefinedMetricError("R^2 undefined: targets are constant")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / tss


def all_metrics(y, y_hat) -> dict[str, float]:
    """All four metrics, with NaN for any that is undefined on this input."""
    out: dict[str, float] = {"MAE": mae(y, y_hat), "RMSE": rmse(y, y_hat)}
    try:
        out["MAPE"], out["MAPE_skipped"] = mape(y, y_hat)
    except UndefinedMetricError:
        out["MAPE"], out["MAPE_skipped"] = float("nan"), int(np.size(y))
    try:
        out["R2"] = r2(y, y_hat)
    except (UndefinedMetricError, EmptyInputError):
        out["R2"] = float("nan")
    return out
