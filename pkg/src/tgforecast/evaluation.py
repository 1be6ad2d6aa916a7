"""Evaluation harness shared by learned models and baselines.

Reports are computed on de-normalised test targets, per target column and
macro-averaged over targets, and aggregated over seeds as mean and sample
standard deviation.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import BaselineKind, baseline_predictions
from .dataio import RegionDataset
from .errors import EmptyInputError
from .metrics import METRICS, all_metrics
from .model import MGLModel, predict
from .training import Normalizers, PreparedData, TrainConfig, prepare_data
from .windows import chronological_split

MACRO = "macro"


@dataclass
class EvalReport:
    model: str
    horizon: int
    seed: int | None
    targets: tuple[str, ...]
    scores: dict[str, dict[str, float]]       # target name or "macro" -> metric -> value
    n: int
    dates: tuple[dt.date, ...] = ()
    actual: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    predicted: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def build_report(name: str, horizon: int, seed: int | None, targets: Sequence[str], dates, actual: np.ndarray,
                 predicted: np.ndarray) -> EvalReport:
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    scores = {t: all_metrics(actual[:, k], predicted[:, k]) for k, t in enumerate(targets)}
    scores[MACRO] = {m: float(np.mean([scores[t][m] for t in targets])) for m in METRICS}
    scores[MACRO]["MAPE_skipped"] = int(sum(scores[t]["MAPE_skipped"] for t in targets))
    return EvalReport(name, horizon, seed, tuple(targets), scores, actual.shape[0], tuple(dates), actual, predicted)


def evaluate_model(model: MGLModel, ds: RegionDataset, normalizers: Normalizers, tcfg: TrainConfig,
                   name: str | None = None, seed: int | None = None, part: str = "test") -> EvalReport:
    cfg = model.config
    data = prepare_data(ds, cfg, tcfg, normalizers=normalizers)
    return report_from_prepared(model, ds, data, name or cfg.variant, seed, part)


def report_from_prepared(model: MGLModel, ds: RegionDataset, data: PreparedData, name: str,
                         seed: int | None = None, part: str = "test") -> EvalReport:
    batch = data.windows[part]
    if batch is None:
        raise EmptyInputError(f"no {part} windows to evaluate")
    pred = data.denormalize_targets(predict(model, batch))
    actual = ds.stats[batch.target_index, :model.config.n_targets]
    dates = [ds.dates[i] for i in batch.target_index]
    return build_report(name, model.config.horizon, seed, ds.stat_names[:model.config.n_targets], dates,
                        actual, pred)


def evaluate_baseline(kind: BaselineKind, ds: RegionDataset, horizon: int, tcfg: TrainConfig,
                      n_targets: int = 2) -> EvalReport:
    split = chronological_split(len(ds), tcfg.test_frac, tcfg.val_frac)
    d = tcfg.window
    targets = np.arange(split.test_start, len(ds))
    ends = targets - horizon
    keep = ends >= d - 1
    targets, ends = targets[keep], ends[keep]
    pred = baseline_predictions(kind, ds.stats, ends, horizon, n_targets, train_end=split.val_start)
    actual = ds.stats[targets, :n_targets]
    return build_report(kind.label, horizon, None, ds.stat_names[:n_targets], [ds.dates[i] for i in targets],
                        actual, pred)


# ---------------------------------------------------------------------------
# aggregation and output
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    model: str
    horizon: int
    target: str
    n_runs: int
    n: int
    mean: dict[str, float]
    std: dict[str, float]
    mape_skipped: int


def summarize(reports: Iterable[EvalReport]) -> list[SummaryRow]:
    groups: dict[tuple[str, int], list[EvalReport]] = {}
    for r in reports:
        groups.setdefault((r.model, r.horizon), []).append(r)
    rows = []
    for (model, horizon), reps in sorted(groups.items(), key=lambda kv: (kv[0][1], _model_order(kv[0][0]))):
        for target in list(reps[0].targets) + [MACRO]:
            mean, std = {}, {}
            for m in METRICS:
                vals = np.array([r.scores[target][m] for r in reps], dtype=np.float64)
                mean[m] = float(np.mean(vals))
                std[m] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            rows.append(SummaryRow(model, horizon, target, len(reps), reps[0].n, mean, std,
                                   int(reps[0].scores[target]["MAPE_skipped"])))
    return rows


_ORDER = ("AVG", "AVG_WINDOW", "LAST_DAY", "LIN_REG", "AR", "LSTM_ONLY", "SR", "SE", "SRE")


def _model_order(name: str) -> tuple[int, str]:
    for i, prefix in enumerate(_ORDER):
        if name == prefix or name.startswith(prefix + "(") or name.startswith(prefix + "-"):
            return i, name
    return len(_ORDER), name


SUMMARY_COLUMNS = ["model", "horizon", "target", "n_runs", "n"] + [
    f"{m}_{s}" for m in METRICS for s in ("mean", "std")] + ["MAPE_skipped"]


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(round(x, 10))


def write_summary_csv(path, rows: Sequence[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            vals = [_fmt(v) for m in METRICS for v in (r.mean[m], r.std[m])]
            w.writerow([r.model, r.horizon, r.target, r.n_runs, r.n, *vals, r.mape_skipped])


def format_summary_table(rows: Sequence[SummaryRow]) -> str:
    header = ["model", "T", "target", "MAE", "RMSE", "MAPE", "R2"]
    body = []
    for r in rows:
        cells = [r.model, str(r.horizon), r.target]
        for m in METRICS:
            digits = 4 if m == "R2" else 2
            cell = f"{r.mean[m]:.{digits}f}"
            if r.n_runs > 1:
                cell += f" ± {r.std[m]:.{digits}f}"
            cells.append(cell)
        body.append(cells)
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines) + "\n"


def write_predictions_csv(path, reports: Sequence[EvalReport]) -> None:
    """Per-day ``date, actual, predicted`` rows for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "horizon", "seed", "date", "target", "actual", "predicted"])
        for r in reports:
            for i, day in enumerate(r.dates):
                for k, t in enumerate(r.targets):
                    w.writerow([r.model, r.horizon, "" if r.seed is None else r.seed, day.isoformat(), t,
                                _fmt(float(r.actual[i, k])), _fmt(float(r.predicted[i, k]))])


def write_reports(out_dir, reports: Sequence[EvalReport], stem: str = "report") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(reports)
    paths = [out / f"{stem}.csv", out / f"{stem}.txt", out / f"{stem}_predictions.csv"]
    write_summary_csv(paths[0], rows)
    paths[1].write_text(format_summary_table(rows))
    write_predictions_csv(paths[2], reports)
    return paths
