"""Run configuration: a YAML or JSON document checked against the published schema.

Relative data paths resolve against the directory holding the config file.
When no ``data`` block is given the run uses the synthetic generator.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .baselines import BASELINE_TAGS, BaselineKind
from .dataio import DEFAULT_ROC_PERIOD, RegionDataset, load_region
from .errors import ConfigError
from .model import ModelConfig
from .synth import SynthConfig, synth_generate
from .training import TrainConfig

SCHEMA_FILE = "run_config.schema.json"


@lru_cache(maxsize=1)
def run_config_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath(SCHEMA_FILE).read_text())


@dataclass(frozen=True)
class DataPaths:
    stats: Path
    stringency: Path | None = None
    embeddings: Path | None = None
    roc_period: int = DEFAULT_ROC_PERIOD
    region: str = ""

    @classmethod
    def from_dir(cls, directory) -> "DataPaths":
        """The file layout written by the ``synth`` command."""
        d = Path(directory)
        emb = d / "embeddings.mgeb"
        strin = d / "stringency.csv"
        return cls(d / "stats.csv", strin if strin.exists() else None, emb if emb.exists() else None)

    def check(self) -> None:
        for p in (self.stats, self.stringency, self.embeddings):
            if p is not None and not p.exists():
                raise ConfigError(f"data file not found: {p}")


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths | None = None
    synth: SynthConfig = SynthConfig()
    model: dict = field(default_factory=dict)   # ModelConfig overrides; data-derived sizes are filled in later
    train: TrainConfig = TrainConfig()
    seeds: tuple[int, ...] = (0,)
    horizons: tuple[int, ...] = (7,)
    baselines: tuple[str, ...] = BASELINE_TAGS
    ar_order: int = 7
    node_counts: tuple[int, ...] = ()
    max_lag: int = 30
    workers: int = 1

    @property
    def variant(self) -> str:
        return self.model.get("variant", ModelConfig.variant)

    def baseline_kinds(self) -> list[BaselineKind]:
        return [BaselineKind(t, self.ar_order if t == "AR_P" else self.train.window) for t in self.baselines]

    def model_config(self, ds: RegionDataset, horizon: int, variant: str | None = None) -> ModelConfig:
        opts = dict(self.model)
        if variant is not None:
            opts["variant"] = variant
        cfg = ModelConfig(n_stat=ds.stats.shape[1], n_reg=ds.regulations.shape[1], n_nodes=ds.n_nodes,
                          emb_dim=ds.emb_dim, horizon=horizon, window=self.train.window, **opts)
        if cfg.uses_graph and ds.embeddings is None:
            raise ConfigError(f"variant {cfg.variant} needs node embeddings but the dataset has none")
        if cfg.uses_regulations and ds.regulations.shape[1] == 0:
            raise ConfigError(f"variant {cfg.variant} needs regulation features but the dataset has none")
        return cfg.validate()

    def train_config(self, seed: int) -> TrainConfig:
        return replace(self.train, seed=seed).validate()

    def dataset(self) -> RegionDataset:
        if self.data is None:
            return synth_generate(self.synth)
        self.data.check()
        # embeddings are optional for variants without a graph branch
        return load_region(self.data.stats, self.data.stringency, self.data.embeddings, self.data.roc_period,
                           self.data.region)


def _check_fields(cls, d: dict, where: str) -> None:
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def run_config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        jsonschema.validate(doc, run_config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    base = base_dir or Path.cwd()

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    data = None
    if "data" in doc:
        d = doc["data"]
        data = DataPaths(resolve(d["stats"]), resolve(d.get("stringency")), resolve(d.get("embeddings")),
                         d.get("roc_period", DEFAULT_ROC_PERIOD), d.get("region", ""))
    s = dict(doc.get("synth", {}))
    if "start_date" in s:
        try:
            s["start_date"] = dt.date.fromisoformat(s["start_date"])
        except ValueError as exc:
            raise ConfigError(f"synth.start_date: {exc}") from exc
    _check_fields(SynthConfig, s, "synth")
    synth = SynthConfig(**s)
    synth.validate()
    model = dict(doc.get("model", {}))
    _check_fields(ModelConfig, model, "model")
    train = TrainConfig.from_dict(doc.get("train", {}))
    counts = tuple(doc.get("node_counts", ()))
    if len(set(counts)) != len(counts):
        raise ConfigError(f"node_counts has duplicates: {list(counts)}")
    return RunConfig(data, synth, model, train, tuple(doc.get("seeds", (0,))), tuple(doc.get("horizons", (7,))),
                     tuple(doc.get("baselines", BASELINE_TAGS)), doc.get("ar_order", 7), counts,
                     doc.get("max_lag", 30), doc.get("workers", 1))


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return run_config_from_dict(doc, path.resolve().parent)
