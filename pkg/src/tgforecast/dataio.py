"""Ingestion and alignment of the three input modalities.

Scalar modalities are CSV files with one row per day:

* statistics: ``date,new_cases,new_hospitalized``
* stringency: ``date,stringency_index,internal_movement``

Per-user daily embeddings live in an MGEB binary file: a 20-byte
little-endian header (magic ``b"MGEB"``, then ``u32`` version, days, nodes,
features) followed by ``days * nodes * features`` float32 values in
(day, node, feature) order.  A ``<file>.manifest`` sidecar holds
``key=value`` lines, at least ``start_date`` and ``region``.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, EmptyInputError, FormatError, IngestionError, UndefinedMetricError

STATS_COLUMNS = ("new_cases", "new_hospitalized")
STRINGENCY_COLUMNS = ("stringency_index", "internal_movement")
MGEB_MAGIC = b"MGEB"
MGEB_VERSION = 1
_MGEB_HEADER = struct.Struct("<4sIIII")
DEFAULT_ROC_PERIOD = 7
# internal movement is an ordinal indicator; it shares the index's 0-100 ceiling
STRINGENCY_RANGE = (0.0, 100.0)


@dataclass(frozen=True)
class DatedTable:
    dates: tuple[dt.date, ...]
    values: np.ndarray          # days x columns
    columns: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class EmbeddingTable:
    start: dt.date
    values: np.ndarray          # days x nodes x features
    manifest: dict = field(default_factory=dict)

    @property
    def dates(self) -> tuple[dt.date, ...]:
        return tuple(self.start + dt.timedelta(days=i) for i in range(self.values.shape[0]))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RegionDataset:
    """Date-aligned statistics, regulation features and node embeddings of one region."""

    dates: tuple[dt.date, ...]
    stats: np.ndarray                   # days x K_stat
    regulations: np.ndarray             # days x K_reg (K_reg may be 0)
    embeddings: np.ndarray | None       # days x N x D_X
    region: str = ""
    stat_names: tuple[str, ...] = STATS_COLUMNS
    reg_names: tuple[str, ...] = ()

    def __post_init__(self):
        validate_dataset(self)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def n_nodes(self) -> int:
        return 0 if self.embeddings is None else self.embeddings.shape[1]

    @property
    def emb_dim(self) -> int:
        return 0 if self.embeddings is None else self.embeddings.shape[2]

    def slice_days(self, start: int, stop: int) -> "RegionDataset":
        emb = None if self.embeddings is None else self.embeddings[start:stop]
        return replace(self, dates=self.dates[start:stop], stats=self.stats[start:stop],
                       regulations=self.regulations[start:stop], embeddings=emb)

    def first_nodes(self, k: int) -> "RegionDataset":
        if self.embeddings is None or not 1 <= k <= self.n_nodes:
            raise ContractError(f"cannot keep {k} of {self.n_nodes} nodes")
        return replace(self, embeddings=self.embeddings[:, :k])


def _check_daily(dates: Sequence[dt.date], what: str) -> None:
    for i in range(1, len(dates)):
        step = (dates[i] - dates[i - 1]).days
        if step != 1:
            raise IngestionError(f"{what}: dates not consecutive between {dates[i - 1]} and {dates[i]}")


def validate_dataset(ds: RegionDataset) -> None:
    n = len(ds.dates)
    if n == 0:
        raise EmptyInputError("dataset has no days")
    _check_daily(ds.dates, "dataset")
    if ds.stats.ndim != 2 or ds.stats.shape[0] != n:
        raise IngestionError(f"stats shape {ds.stats.shape} does not match {n} days")
    if ds.regulations.ndim != 2 or ds.regulations.shape[0] != n:
        raise IngestionError(f"regulations shape {ds.regulations.shape} does not match {n} days")
    if ds.embeddings is not None and (ds.embeddings.ndim != 3 or ds.embeddings.shape[0] != n):
        raise IngestionError(f"embeddings shape {ds.embeddings.shape} does not match {n} days")
    for name, arr in (("stats", ds.stats), ("regulations", ds.regulations), ("embeddings", ds.embeddings)):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise IngestionError(f"{name} contain non-finite values")
    if np.any(ds.stats < 0):
        raise IngestionError("stats contain negative counts")
    if "stringency_index" in ds.reg_names:
        col = ds.regulations[:, ds.reg_names.index("stringency_index")]
        if np.any((col < STRINGENCY_RANGE[0]) | (col > STRINGENCY_RANGE[1])):
            raise IngestionError("stringency index outside [0, 100]")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _read_dated_csv(path, columns: tuple[str, ...], bounds: tuple[float, float] | None) -> DatedTable:
    path = Path(path)
    dates: list[dt.date] = []
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["date", *columns]
        if header is None or [h.strip() for h in header] != expected:
            raise IngestionError(f"{path}: header must be {','.join(expected)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise IngestionError(f"{path}: row {line_no} has {len(row)} fields, expected {len(expected)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise IngestionError(f"{path}: row {line_no} is malformed ({exc})") from exc
            if not all(math.isfinite(v) for v in vals):
                raise IngestionError(f"{path}: row {line_no} has a non-finite value")
            if bounds is None and any(v < 0 for v in vals):
                raise IngestionError(f"{path}: row {line_no} ({day}) has a negative count")
            if bounds is not None and any(v < bounds[0] or v > bounds[1] for v in vals):
                raise IngestionError(
                    f"{path}: row {line_no} ({day}) has a value outside [{bounds[0]:g}, {bounds[1]:g}]")
            if dates:
                gap = (day - dates[-1]).days
                if gap == 0:
                    raise IngestionError(f"{path}: row {line_no} duplicates date {day}")
                if gap < 0:
                    raise IngestionError(f"{path}: row {line_no} date {day} is earlier than {dates[-1]}")
                if gap > 1:
                    raise IngestionError(
                        f"{path}: row {line_no} leaves a gap of {gap - 1} day(s) after {dates[-1]}")
            dates.append(day)
            rows.append(vals)
    if not dates:
        raise EmptyInputError(f"{path}: no data rows")
    return DatedTable(tuple(dates), np.asarray(rows, dtype=np.float64), columns)


def load_stats_csv(path) -> DatedTable:
    return _read_dated_csv(path, STATS_COLUMNS, bounds=None)


def rate_of_change(series, period: int = DEFAULT_ROC_PERIOD) -> np.ndarray:
    """``r_t = s_t - s_{t-p}`` with the first ``p`` entries set to zero."""
    s = np.asarray(series, dtype=np.float64)
    if period < 1:
        raise ContractError("rate_of_change period must be >= 1")
    if period >= len(s):
        raise EmptyInputError(f"rate_of_change period {period} needs more than {len(s)} values")
    out = np.zeros_like(s)
    out[period:] = s[period:] - s[:-period]
    return out


def load_stringency_csv(path, period: int = DEFAULT_ROC_PERIOD) -> DatedTable:
    """Load the index and movement indicator and append their rates of change."""
    raw = _read_dated_csv(path, STRINGENCY_COLUMNS, bounds=STRINGENCY_RANGE)
    return with_rates(raw, period)


def with_rates(raw: DatedTable, period: int = DEFAULT_ROC_PERIOD) -> DatedTable:
    if len(raw) <= period:
        # too short for the configured period; rates are all zero
        rates = np.zeros_like(raw.values)
    else:
        rates = np.stack([rate_of_change(raw.values[:, j], period) for j in range(raw.values.shape[1])], axis=1)
    return DatedTable(raw.dates, np.concatenate([raw.values, rates], axis=1),
                      raw.columns + tuple(f"{c}_roc" for c in raw.columns))


def write_stats_csv(path, dates: Sequence[dt.date], values: np.ndarray) -> None:
    _write_dated_csv(path, dates, values, STATS_COLUMNS, "{:.0f}")


def write_stringency_csv(path, dates: Sequence[dt.date], values: np.ndarray) -> None:
    _write_dated_csv(path, dates, values, STRINGENCY_COLUMNS, "{:.2f}")


def _write_dated_csv(path, dates, values, columns, fmt) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *columns])
        for day, row in zip(dates, np.asarray(values)):
            w.writerow([day.isoformat(), *(fmt.format(v) for v in row)])


# ---------------------------------------------------------------------------
# MGEB embeddings
# ---------------------------------------------------------------------------

def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest")


def write_embeddings(path, values: np.ndarray, start: dt.date | None = None, region: str = "",
                     source: str = "") -> None:
    arr = np.asarray(values)
    if arr.ndim != 3:
        raise ContractError(f"embeddings must be days x nodes x features, got {arr.shape}")
    T, N, D = arr.shape
    with open(path, "wb") as fh:
        fh.write(_MGEB_HEADER.pack(MGEB_MAGIC, MGEB_VERSION, T, N, D))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if start is not None:
        lines = [f"start_date={start.isoformat()}", f"region={region}", f"source={source}"]
        manifest_path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    mpath = manifest_path(path)
    if not mpath.exists():
        raise IngestionError(f"missing manifest {mpath}")
    out = {}
    for n, line in enumerate(mpath.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestionError(f"{mpath}: line {n} is not key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_embeddings(path) -> np.ndarray:
    """Read an MGEB payload as a float64 ``days x nodes x features`` array."""
    blob = Path(path).read_bytes()
    if len(blob) < _MGEB_HEADER.size:
        raise FormatError(f"{path}: header truncated at byte {len(blob)} (need {_MGEB_HEADER.size})")
    magic, version, T, N, D = _MGEB_HEADER.unpack_from(blob, 0)
    if magic != MGEB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    if version != MGEB_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    expected = _MGEB_HEADER.size + 4 * T * N * D
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload ends at byte {len(blob)}, header declares {T}x{N}x{D} ending at byte {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_MGEB_HEADER.size, count=T * N * D)
    return data.astype(np.float64).reshape(T, N, D)


def load_embedding_table(path) -> EmbeddingTable:
    manifest = read_manifest(path)
    try:
        start = dt.date.fromisoformat(manifest["start_date"])
    except (KeyError, ValueError) as exc:
        raise IngestionError(f"{manifest_path(path)}: missing or invalid start_date") from exc
    return EmbeddingTable(start, load_embeddings(path), manifest)


def aggregate_user_posts(post_embeddings: Sequence[np.ndarray], how: str = "sum") -> np.ndarray:
    """Daily user embedding from that day's post embeddings; no posts gives zeros."""
    if len(post_embeddings) == 0 and np.ndim(post_embeddings) < 2:
        raise EmptyInputError("aggregate_user_posts needs the embedding width; pass an empty 0 x D array")
    stacked = np.atleast_2d(np.asarray(post_embeddings, dtype=np.float64))
    if stacked.shape[0] == 0:
        return np.zeros(stacked.shape[1])
    if how == "sum":
        return stacked.sum(axis=0)
    if how == "mean":
        return stacked.mean(axis=0)
    raise ContractError(f"unknown aggregation {how!r}")


# ---------------------------------------------------------------------------
# alignment and correlation
# ---------------------------------------------------------------------------

def align(stats: DatedTable, regs: DatedTable | None = None, embs: EmbeddingTable | None = None,
          region: str = "") -> RegionDataset:
    """Intersect the modalities' date ranges into one contiguous dataset."""
    tables = [stats.dates] + ([regs.dates] if regs is not None else []) + ([embs.dates] if embs is not None else [])
    common = set(tables[0])
    for dates in tables[1:]:
        common &= set(dates)
    if not common:
        raise IngestionError("modalities share no dates")
    days = sorted(common)
    _check_daily(days, "aligned date range")

    def pick(dates, arr):
        pos = {d: i for i, d in enumerate(dates)}
        idx = [pos[d] for d in days]
        lo, hi = idx[0], idx[-1] + 1
        return arr[lo:hi]

    reg_values = pick(regs.dates, regs.values) if regs is not None else np.zeros((len(days), 0))
    emb_values = pick(embs.dates, embs.values) if embs is not None else None
    if not region and embs is not None:
        region = embs.manifest.get("region", "")
    return RegionDataset(tuple(days), pick(stats.dates, stats.values), reg_values, emb_values, region,
                         stat_names=stats.columns, reg_names=regs.columns if regs is not None else ())


def load_region(stats_path, stringency_path=None, embeddings_path=None, roc_period: int = DEFAULT_ROC_PERIOD,
                region: str = "") -> RegionDataset:
    stats = load_stats_csv(stats_path)
    regs = load_stringency_csv(stringency_path, roc_period) if stringency_path else None
    embs = load_embedding_table(embeddings_path) if embeddings_path else None
    return align(stats, regs, embs, region)


def lagged_pearson(a, b, lag: int) -> float:
    """Pearson r between ``a[t]`` and ``b[t + lag]`` over their overlap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    if lag >= 0:
        x, y = a[:n - lag], b[lag:]
    else:
        x, y = a[-lag:], b[:n + lag]
    if len(x) < 3:
        raise EmptyInputError(f"lag {lag} leaves {max(len(x), 0)} overlapping points; need at least 3")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise UndefinedMetricError(f"constant series at lag {lag}; correlation undefined")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))
