"""Seeded synthetic region with cases, stringency and per-user embeddings.

Cases come from a stochastic SIRS process whose transmission rate drifts
seasonally and is damped by the current stringency.  Stringency follows the
recent case load with a response delay.  Each informative node's daily
embedding has a mean (over features) proportional to the case count ``lag``
days later, plus Gaussian noise; uninformative nodes are pure noise.  The
signal sits in the embedding mean so that models pooling over nodes and
features can recover it.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .dataio import STATS_COLUMNS, DatedTable, RegionDataset, validate_dataset, with_rates
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    n_days: int = 450
    n_nodes: int = 50
    emb_dim: int = 8
    lag: int = 7
    informative_fraction: float = 0.5
    emb_noise: float = 1.0
    case_noise: float = 0.05
    stringency_noise: float = 1.0
    seed: int = 0
    population: float = 1.0e7
    start_date: dt.date = dt.date(2020, 8, 1)
    region: str = "SYNTH"
    roc_period: int = 7
    burn_in: int = 365

    def validate(self) -> None:
        if self.n_days < 2 or self.n_nodes < 1 or self.emb_dim < 1:
            raise ConfigError("synth: n_days >= 2, n_nodes >= 1 and emb_dim >= 1 required")
        if self.lag < 0 or self.burn_in < 0:
            raise ConfigError("synth: lag and burn_in must be >= 0")
        if not 0.0 <= self.informative_fraction <= 1.0:
            raise ConfigError("synth: informative_fraction must lie in [0, 1]")
        if min(self.emb_noise, self.case_noise, self.stringency_noise) < 0:
            raise ConfigError("synth: noise scales must be non-negative")


def informative_mask(n_nodes: int, fraction: float) -> np.ndarray:
    """Evenly interleaved informative nodes, so any prefix keeps about the same share."""
    i = np.arange(n_nodes)
    return np.floor((i + 1) * fraction + 1e-9) > np.floor(i * fraction + 1e-9)


def _simulate_epidemic(cfg: SynthConfig, days: int, rng: np.random.Generator):
    """Seasonally forced SIRS with a stringency feedback loop.

    The first ``cfg.burn_in`` simulated days are discarded so the recorded
    span starts on the recurring wave pattern, not the initial transient.
    """
    P = cfg.population
    gamma, waning, report = 1.0 / 6.0, 1.0 / 150.0, 0.35
    I = 2.0e-4 * P
    S = 0.62 * P
    R = P - S - I
    period = 120.0 * rng.uniform(0.9, 1.1)
    phase = rng.uniform(0, 2 * np.pi)
    drift = 0.0
    stringency = 30.0
    level_hist: list[float] = []
    total = cfg.burn_in + days
    cases = np.zeros(total)
    strin = np.zeros(total)
    delay = 10
    for t in range(total):
        drift = 0.97 * drift + rng.normal(0, 0.01)
        seasonal = 1.0 + 0.25 * np.sin(2 * np.pi * t / period + phase)
        beta = 0.27 * seasonal * np.exp(drift) * (1.0 - 0.45 * stringency / 100.0)
        new_inf = min(beta * S * I / P, S)
        recov = gamma * I
        wane = waning * R
        S, I, R = S - new_inf + wane, I + new_inf - recov + 1.0, R + recov - wane
        noisy = report * new_inf * np.exp(rng.normal(0, cfg.case_noise))
        cases[t] = rng.poisson(max(noisy, 0.0))
        # stringency chases a target set by the case load observed `delay` days ago
        level_hist.append(cases[t])
        seen = np.mean(level_hist[max(0, t - delay - 6): max(1, t - delay + 1)])
        target = 100.0 * np.clip(seen / (2.5e-4 * P), 0.0, 1.0) ** 0.6
        stringency += 0.08 * (target - stringency) + rng.normal(0, cfg.stringency_noise)
        stringency = float(np.clip(stringency, 0.0, 100.0))
        strin[t] = stringency
    return cases[cfg.burn_in:], strin[cfg.burn_in:]


def synth_generate(cfg: SynthConfig = SynthConfig()) -> RegionDataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    total = cfg.n_days + cfg.lag
    cases, strin = _simulate_epidemic(cfg, total, rng)
    hosp = np.zeros(total)
    hosp_lag = 4
    hosp[hosp_lag:] = rng.binomial(cases[:-hosp_lag].astype(np.int64), 0.06)
    movement = np.digitize(strin, [35.0, 65.0]).astype(np.float64)

    scale = max(cases.mean(), 1.0)
    signal = cases[cfg.lag:cfg.lag + cfg.n_days] / scale           # cases `lag` days ahead
    mask = informative_mask(cfg.n_nodes, cfg.informative_fraction)
    loadings = rng.uniform(0.5, 1.5, size=cfg.n_nodes) * mask
    noise = rng.normal(0.0, cfg.emb_noise, size=(cfg.n_days, cfg.n_nodes, cfg.emb_dim))
    emb = signal[:, None, None] * loadings[None, :, None] + noise
    # stored as float32 on disk; round now so files and in-memory data agree
    emb = emb.astype(np.float32).astype(np.float64)

    n = cfg.n_days
    dates = tuple(cfg.start_date + dt.timedelta(days=i) for i in range(n))
    stats = np.stack([cases[:n], hosp[:n]], axis=1)
    raw_regs = DatedTable(dates, np.round(np.stack([strin[:n], movement[:n]], axis=1), 2),
                          ("stringency_index", "internal_movement"))
    regs = with_rates(raw_regs, cfg.roc_period)
    ds = RegionDataset(dates, stats, regs.values, emb, cfg.region, STATS_COLUMNS, regs.columns)
    validate_dataset(ds)
    return ds
