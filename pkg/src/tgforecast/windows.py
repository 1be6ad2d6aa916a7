"""Sliding windows, chronological splits and z-score normalisation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import RegionDataset
from .errors import ConfigError, EmptyInputError


@dataclass(frozen=True)
class WindowSample:
    """``d`` consecutive days of inputs and the target ``horizon`` days after the last one."""

    stat: np.ndarray                # d x K_stat
    reg: np.ndarray                 # d x K_reg
    graph: np.ndarray | None        # d x N x D_X
    target: np.ndarray              # 1 x K
    end_index: int                  # last input day
    target_index: int


@dataclass(frozen=True)
class WindowBatch:
    stat: np.ndarray                # B x d x K_stat
    reg: np.ndarray                 # B x d x K_reg
    graph: np.ndarray | None        # B x d x N x D_X
    target: np.ndarray              # B x K
    target_index: np.ndarray        # B

    def __len__(self) -> int:
        return self.stat.shape[0]


def window_count(n_days: int, d: int, horizon: int) -> int:
    return max(n_days - d - horizon + 1, 0)


def make_windows(ds: RegionDataset, d: int, horizon: int, n_targets: int | None = None,
                 stats: np.ndarray | None = None, regs: np.ndarray | None = None,
                 embs: np.ndarray | None = None) -> list[WindowSample]:
    """One sample per start day, ordered by date.

    The optional arrays override the dataset's own (e.g. normalised copies);
    samples hold views, so no window data is duplicated.
    """
    if d < 1 or horizon < 1:
        raise ConfigError("window length and horizon must be >= 1")
    n = len(ds)
    if n < d + horizon:
        raise EmptyInputError(f"dataset has {n} days; window {d} with horizon {horizon} needs at least {d + horizon}")
    stats = ds.stats if stats is None else stats
    regs = ds.regulations if regs is None else regs
    embs = ds.embeddings if embs is None else embs
    k = stats.shape[1] if n_targets is None else n_targets
    out = []
    for start in range(window_count(n, d, horizon)):
        end = start + d - 1
        tgt = end + horizon
        out.append(WindowSample(
            stat=stats[start:end + 1], reg=regs[start:end + 1],
            graph=None if embs is None else embs[start:end + 1],
            target=stats[tgt:tgt + 1, :k], end_index=end, target_index=tgt))
    return out


def stack_windows(samples: Sequence[WindowSample]) -> WindowBatch:
    if not samples:
        raise EmptyInputError("no windows to stack")
    graph = None if samples[0].graph is None else np.stack([s.graph for s in samples])
    return WindowBatch(
        stat=np.stack([s.stat for s in samples]), reg=np.stack([s.reg for s in samples]), graph=graph,
        target=np.concatenate([s.target for s in samples]),
        target_index=np.array([s.target_index for s in samples]))


@dataclass(frozen=True)
class Split:
    """Day index boundaries: train ``[0, val_start)``, val ``[val_start, test_start)``, test ``[test_start, n)``."""

    n_days: int
    val_start: int
    test_start: int

    @property
    def train(self) -> range:
        return range(0, self.val_start)

    @property
    def val(self) -> range:
        return range(self.val_start, self.test_start)

    @property
    def test(self) -> range:
        return range(self.test_start, self.n_days)

    def part_of(self, day: int) -> str:
        if day < self.val_start:
            return "train"
        return "val" if day < self.test_start else "test"

    def assign(self, windows: Sequence[WindowSample]) -> dict[str, list[WindowSample]]:
        """Group windows by the split their target falls in."""
        out: dict[str, list[WindowSample]] = {"train": [], "val": [], "test": []}
        for w in windows:
            out[self.part_of(w.target_index)].append(w)
        return out


def _ceil(x: float) -> int:
    # guard against 0.2 * 100 landing a hair above 20
    return math.ceil(round(x, 9))


def chronological_split(n_days: int | RegionDataset, test_frac: float = 0.2, val_frac: float = 0.1) -> Split:
    """Test is the last ``ceil(test_frac * n)`` days; val is the last ``val_frac`` share of the rest."""
    n = n_days if isinstance(n_days, int) else len(n_days)
    if not 0 < test_frac < 1 or not 0 < val_frac < 1 or test_frac + val_frac >= 1:
        raise ConfigError(f"split fractions must lie in (0, 1) with sum < 1; got test={test_frac}, val={val_frac}")
    n_test = _ceil(test_frac * n)
    rest = n - n_test
    n_val = _ceil(val_frac * rest)
    if n_test < 1 or n_val < 1 or rest - n_val < 1:
        raise ConfigError(f"{n} days cannot be split into non-empty train/val/test parts")
    return Split(n, rest - n_val, rest)


@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-score; the feature axis is the last one."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Normalizer":
        arr = np.asarray(rows, dtype=np.float64)
        flat = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(-1, 1)
        if arr.shape[0] < 2:
            raise EmptyInputError("normalizer needs at least two training rows")
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def subset(self, cols: slice | Sequence[int]) -> "Normalizer":
        return Normalizer(self.mean[cols], self.std[cols])


def fit_normalizer(rows: np.ndarray) -> Normalizer:
    return Normalizer.fit(rows)
