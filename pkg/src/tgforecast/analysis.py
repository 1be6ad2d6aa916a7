"""Lagged correlation of candidate leading signals against the targets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dataio import RegionDataset, lagged_pearson
from .errors import ConfigError, EmptyInputError, UndefinedMetricError

UNDEFINED = "undefined"


@dataclass(frozen=True)
class LagRow:
    signal: str
    target: str
    lag: int
    r: float        # nan when undefined


def candidate_signals(ds: RegionDataset) -> dict[str, np.ndarray]:
    """Regulation columns, embedding summaries, and the targets themselves."""
    out = {name: ds.regulations[:, j] for j, name in enumerate(ds.reg_names)}
    if ds.embeddings is not None:
        node_mean = ds.embeddings.mean(axis=1)
        out["embedding_mean"] = node_mean.mean(axis=1)
        out["embedding_mean_norm"] = np.linalg.norm(node_mean, axis=1)
    for j, name in enumerate(ds.stat_names):
        out[name] = ds.stats[:, j]
    return out


def correlation_table(ds: RegionDataset, max_lag: int, signals: dict[str, np.ndarray] | None = None) -> list[LagRow]:
    """``r(signal_t, target_{t+lag})`` for lags ``0..max_lag``; undefined cells hold nan."""
    if max_lag < 0:
        raise ConfigError("max_lag must be >= 0")
    if max_lag > len(ds) - 3:
        raise ConfigError(f"max_lag {max_lag} leaves fewer than 3 overlapping days of {len(ds)}")
    signals = candidate_signals(ds) if signals is None else signals
    rows = []
    for sname, s in signals.items():
        for j, tname in enumerate(ds.stat_names):
            for lag in range(max_lag + 1):
                try:
                    r = lagged_pearson(s, ds.stats[:, j], lag)
                except (UndefinedMetricError, EmptyInputError):
                    r = math.nan
                rows.append(LagRow(sname, tname, lag, r))
    return rows


def best_lags(rows: list[LagRow]) -> dict[tuple[str, str], LagRow]:
    """Row with the largest defined r per (signal, target); earliest lag wins ties."""
    best: dict[tuple[str, str], LagRow] = {}
    for row in rows:
        if math.isnan(row.r):
            continue
        key = (row.signal, row.target)
        if key not in best or row.r > best[key].r:
            best[key] = row
    return best


def write_correlation_csv(path, rows: list[LagRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["signal", "target", "lag", "r"])
        for row in rows:
            w.writerow([row.signal, row.target, row.lag, UNDEFINED if math.isnan(row.r) else repr(round(row.r, 12))])
