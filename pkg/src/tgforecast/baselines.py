"""Numerical and regression baselines.

``AR_P`` is a least-squares autoregression standing in for ARIMA (no
differencing, no moving-average terms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, EmptyInputError, NumericError

BASELINE_TAGS = ("AVG", "AVG_WINDOW", "LAST_DAY", "LIN_REG", "AR_P")
OLS_RIDGE = 1e-8


@dataclass(frozen=True)
class BaselineKind:
    tag: str
    order: int = 7   # AR order p, or the LIN_REG / AVG_WINDOW window d

    def __post_init__(self):
        if self.tag not in BASELINE_TAGS:
            raise ConfigError(f"unknown baseline {self.tag!r}; expected one of {BASELINE_TAGS}")
        if self.order < 1:
            raise ConfigError("baseline order must be >= 1")

    @property
    def label(self) -> str:
        if self.tag == "AR_P":
            return f"AR({self.order})"
        return self.tag


def _history(history) -> np.ndarray:
    h = np.asarray(history, dtype=np.float64)
    if h.shape[0] == 0:
        raise EmptyInputError("empty history")
    return h


def avg_forecast(history) -> np.ndarray | float:
    """Mean of everything observed so far; the same value for every horizon."""
    h = _history(history)
    out = h.mean(axis=0)
    return float(out) if h.ndim == 1 else out


def avg_window_forecast(history, d: int) -> np.ndarray | float:
    h = _history(history)
    if d < 1 or h.shape[0] < d:
        raise EmptyInputError(f"window of {d} days needs at least {d} observations, got {h.shape[0]}")
    out = h[-d:].mean(axis=0)
    return float(out) if h.ndim == 1 else out


def last_day_forecast(history) -> np.ndarray | float:
    h = _history(history)
    return float(h[-1]) if h.ndim == 1 else h[-1].copy()


@dataclass(frozen=True)
class OLSModel:
    intercept: np.ndarray | float
    coef: np.ndarray


def ols_fit(X, y, ridge: float = OLS_RIDGE) -> OLSModel:
    """Least squares with intercept via the normal equations.

    Columns are centred and scaled first, which leaves the minimiser unchanged
    and keeps the system well conditioned.  Constant columns get a zero slope.
    The ``ridge`` term is only added when the remaining design is rank deficient.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, f = X.shape
    if y.shape[0] != n:
        raise ContractError(f"{n} design rows but {y.shape[0]} targets")
    if n <= f:
        raise EmptyInputError(f"OLS with {f} features needs more than {f} samples, got {n}")
    mu, sd = X.mean(axis=0), X.std(axis=0)
    live = sd > 0
    Z = (X[:, live] - mu[live]) / sd[live]
    y_mean = y.mean(axis=0)
    gram = Z.T @ Z
    if Z.shape[1] and np.linalg.matrix_rank(Z) < Z.shape[1]:
        gram = gram + ridge * np.eye(Z.shape[1])
    try:
        beta = np.linalg.solve(gram, Z.T @ (y - y_mean))
    except np.linalg.LinAlgError as exc:
        raise NumericError("OLS normal equations are singular") from exc
    coef = np.zeros((f,) + beta.shape[1:])
    coef[live] = beta / (sd[live][:, None] if beta.ndim == 2 else sd[live])
    intercept = y_mean - mu @ coef
    return OLSModel(intercept, coef)


def ols_predict(model: OLSModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X @ model.coef + model.intercept


@dataclass(frozen=True)
class ARModel:
    const: float
    phi: np.ndarray     # phi[i] multiplies y_{t-1-i}

    @property
    def order(self) -> int:
        return self.phi.size


def _lag_matrix(series: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    n = series.size
    X = np.stack([series[p - i - 1:n - i - 1] for i in range(p)], axis=1)
    return X, series[p:]


def ar_fit(series, p: int) -> ARModel:
    """Fit ``y_t = c + sum_i phi_i y_{t-i}`` by least squares."""
    s = np.asarray(series, dtype=np.float64).reshape(-1)
    if p < 1:
        raise ConfigError("AR order must be >= 1")
    if s.size <= max(2 * p, p + 1):
        raise EmptyInputError(f"AR({p}) needs more than {max(2 * p, p + 1)} observations, got {s.size}")
    X, y = _lag_matrix(s, p)
    m = ols_fit(X, y)
    return ARModel(float(m.intercept), np.asarray(m.coef, dtype=np.float64))


def ar_forecast(model: ARModel, history, steps: int) -> np.ndarray:
    """Forecasts for 1..``steps`` days ahead by iterating the recurrence."""
    h = list(np.asarray(history, dtype=np.float64).reshape(-1)[-model.order:])
    if len(h) < model.order:
        raise EmptyInputError(f"AR({model.order}) forecast needs {model.order} past values")
    out = []
    for _ in range(steps):
        nxt = model.const + float(np.dot(model.phi, h[::-1][:model.order]))
        out.append(nxt)
        h.append(nxt)
    return np.asarray(out)


def baseline_predictions(kind: BaselineKind, stats: np.ndarray, end_indices, horizon: int, n_targets: int,
                         train_end: int, train_windows_end=None) -> np.ndarray:
    """Predict ``stats[end + horizon, :n_targets]`` for each window ending at ``end``.

    ``stats`` holds raw (de-normalised) values; fitted baselines only see rows
    before ``train_end``.  Each target column is forecast independently.
    """
    stats = np.asarray(stats, dtype=np.float64)[:, :n_targets]
    ends = np.asarray(end_indices, dtype=int)
    if kind.tag == "AVG":
        csum = np.cumsum(stats, axis=0)
        return csum[ends] / (ends[:, None] + 1)
    if kind.tag == "AVG_WINDOW":
        return np.stack([avg_window_forecast(stats[:e + 1], kind.order) for e in ends])
    if kind.tag == "LAST_DAY":
        return stats[ends].copy()
    d = kind.order
    if kind.tag == "LIN_REG":
        if train_windows_end is None:
            train_windows_end = np.arange(d - 1, train_end - horizon)
        tr = np.asarray(train_windows_end, dtype=int)
        tr = tr[(tr >= d - 1) & (tr + horizon < train_end)]

        def design(idx):
            return np.stack([stats[e - d + 1:e + 1].reshape(-1) for e in idx])

        preds = np.empty((ends.size, n_targets))
        for k in range(n_targets):
            m = ols_fit(design(tr), stats[tr + horizon, k])
            preds[:, k] = ols_predict(m, design(ends))
        return preds
    # AR_P
    preds = np.empty((ends.size, n_targets))
    for k in range(n_targets):
        m = ar_fit(stats[:train_end, k], d)
        for i, e in enumerate(ends):
            preds[i, k] = ar_forecast(m, stats[:e + 1, k], horizon)[-1]
    return preds
