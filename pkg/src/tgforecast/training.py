"""AdamW and the early-stopped, chronologically split training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from . import autodiff as ad
from .dataio import RegionDataset
from .errors import ConfigError, NumericError
from .model import MGLModel, ModelConfig, forward_batch, loss, predict
from .windows import Normalizer, Split, WindowBatch, chronological_split, make_windows, stack_windows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    window: int = 7
    max_epochs: int = 300
    patience: int = 20
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    val_frac: float = 0.1
    test_frac: float = 0.2

    def validate(self) -> "TrainConfig":
        if not 0 < self.test_frac < 1 or not 0 < self.val_frac < 1:
            raise ConfigError("test_frac and val_frac must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.window < 1:
            raise ConfigError("batch_size, max_epochs and window must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie in [0, max_epochs]")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("lr and eps must be positive, weight_decay non-negative")
        if not all(0 <= b < 1 for b in self.betas):
            raise ConfigError("Adam betas must lie in [0, 1)")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d).validate()


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
               cfg: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One decoupled-weight-decay Adam update; returns new arrays and a new state."""
    b1, b2 = cfg.betas
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ConfigError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        m = b1 * state.m.get(name, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = theta - cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * theta)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(t, new_m, new_v)


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------

@dataclass
class Normalizers:
    stat: Normalizer
    reg: Normalizer | None
    emb: Normalizer | None

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {"norm.stat.mean": self.stat.mean, "norm.stat.std": self.stat.std}
        if self.reg is not None:
            out.update({"norm.reg.mean": self.reg.mean, "norm.reg.std": self.reg.std})
        if self.emb is not None:
            out.update({"norm.emb.mean": self.emb.mean, "norm.emb.std": self.emb.std})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "Normalizers":
        def get(prefix):
            if f"norm.{prefix}.mean" not in arrays:
                return None
            return Normalizer(arrays[f"norm.{prefix}.mean"], arrays[f"norm.{prefix}.std"])
        return cls(get("stat"), get("reg"), get("emb"))


@dataclass
class PreparedData:
    split: Split
    normalizers: Normalizers
    windows: dict[str, WindowBatch | None]
    horizon: int

    def targets_raw(self, part: str) -> np.ndarray:
        b = self.windows[part]
        return self.denormalize_targets(b.target)

    def denormalize_targets(self, z: np.ndarray) -> np.ndarray:
        k = z.shape[1]
        return self.normalizers.stat.subset(slice(0, k)).invert(z)


def fit_normalizers(ds: RegionDataset, split: Split, use_emb: bool = True) -> Normalizers:
    train = slice(0, split.val_start)
    reg = Normalizer.fit(ds.regulations[train]) if ds.regulations.shape[1] else None
    emb = Normalizer.fit(ds.embeddings[train]) if (use_emb and ds.embeddings is not None) else None
    return Normalizers(Normalizer.fit(ds.stats[train]), reg, emb)


def prepare_data(ds: RegionDataset, cfg: ModelConfig, tcfg: TrainConfig,
                 normalizers: Normalizers | None = None) -> PreparedData:
    """Normalise with train-only statistics and group windows by target split."""
    split = chronological_split(len(ds), tcfg.test_frac, tcfg.val_frac)
    norms = normalizers or fit_normalizers(ds, split, use_emb=cfg.uses_graph)
    stats = norms.stat.apply(ds.stats)
    regs = norms.reg.apply(ds.regulations) if norms.reg is not None else ds.regulations
    embs = norms.emb.apply(ds.embeddings) if (norms.emb is not None and cfg.uses_graph) else None
    windows = make_windows(ds, cfg.window, cfg.horizon, cfg.n_targets, stats=stats, regs=regs, embs=embs)
    parts = split.assign(windows)
    return PreparedData(split, norms, {k: stack_windows(v) if v else None for k, v in parts.items()}, cfg.horizon)


def _take(batch: WindowBatch, idx: np.ndarray) -> WindowBatch:
    return WindowBatch(batch.stat[idx], batch.reg[idx], None if batch.graph is None else batch.graph[idx],
                       batch.target[idx], batch.target_index[idx])


def evaluate_mse(model: MGLModel, batch: WindowBatch) -> float:
    pred = predict(model, batch)
    return float(np.mean((pred - batch.target) ** 2))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    elapsed_s: float

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch, "train_mse": self.train_mse, "val_mse": self.val_mse,
                           "elapsed_s": round(self.elapsed_s, 6)})


@dataclass
class TrainResult:
    model: MGLModel
    log: list[EpochRecord]
    data: PreparedData
    best_epoch: int
    best_val_mse: float
    stopped_early: bool


def train(model: MGLModel, ds: RegionDataset, tcfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          data: PreparedData | None = None) -> TrainResult:
    """Mini-batch AdamW with early stopping on validation MSE.

    Returns the parameters of the best validation epoch.  Loss and MSE are in
    normalised target space.
    """
    tcfg.validate()
    cfg = model.config
    if tcfg.window != cfg.window:
        raise ConfigError(f"train window {tcfg.window} differs from model window {cfg.window}")
    data = data or prepare_data(ds, cfg, tcfg)
    train_b, val_b = data.windows["train"], data.windows["val"]
    if train_b is None or val_b is None:
        raise ConfigError("not enough days for both training and validation windows")

    rng = np.random.default_rng(tcfg.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    state = AdamState()
    best = (np.inf, 0, params)
    history: list[EpochRecord] = []
    since_best = 0
    t0 = time.perf_counter()
    stopped = False
    n = len(train_b)
    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, tcfg.batch_size), start=1):
            batch = _take(train_b, order[lo:lo + tcfg.batch_size])
            leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}
            out = loss(forward_batch(cfg, leaves, batch), batch.target)
            value = out.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            ad.backward(out)
            params, state = adamw_step(params, {k: t.grad for k, t in leaves.items()}, state, tcfg)
            total += value * len(batch)
        val = evaluate_mse(model.with_params(params), val_b)
        if not np.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        rec = EpochRecord(epoch, total / n, val, time.perf_counter() - t0)
        history.append(rec)
        if on_epoch:
            on_epoch(rec)
        log.debug("epoch %d train %.5f val %.5f", epoch, rec.train_mse, val)
        if val < best[0]:
            best = (val, epoch, params)
            since_best = 0
        else:
            since_best += 1
            if since_best > tcfg.patience:
                stopped = True
                break
    return TrainResult(model.with_params(best[2]), history, data, best[1], best[0], stopped)
