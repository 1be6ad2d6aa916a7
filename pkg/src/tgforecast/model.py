"""Multi-modal forecaster: recurrent statistics branch, temporal graph branch, fusion head.

Variants:

* ``LSTM_ONLY`` -- recurrent branch over statistics only.
* ``SR``  -- recurrent branch over ``[statistics ; regulations]``.
* ``SE``  -- recurrent branch over statistics plus the graph branch over node
  embeddings (``graph_only`` drops the recurrent branch).
* ``SRE`` -- recurrent branch over ``[statistics ; regulations]`` plus the graph branch.

The graph branch runs the temporal graph GRU over the window and averages
the final hidden states over nodes.  The head is linear by default; the
``softmax`` head is kept for comparison only since it cannot represent counts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, FormatError
from .graph import AdaptiveGraphConvParams, TemporalGraphParams, run_temporal_graph
from .recurrent import cell_from_arrays, glorot_uniform, linear_head, param_shapes, run_sequence
from .windows import WindowBatch, WindowSample, stack_windows

VARIANTS = ("SR", "SE", "SRE", "LSTM_ONLY")
CONV_BLOCKS = ("gate_h", "gate_x", "cand_h", "cand_x")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "SRE"
    n_stat: int = 2
    n_reg: int = 4
    n_nodes: int = 0
    emb_dim: int = 0
    graph_hidden: int = 16
    seq_hidden: int = 32
    node_emb_dim: int = 8
    horizon: int = 1
    window: int = 7
    n_targets: int = 2
    cell: str = "gru"
    head: str = "linear"
    tie_embeddings: bool = False
    separate_candidate_embeddings: bool = False
    graph_only: bool = False

    @property
    def uses_graph(self) -> bool:
        return self.variant in ("SE", "SRE")

    @property
    def uses_regulations(self) -> bool:
        return self.variant in ("SR", "SRE")

    @property
    def uses_sequence(self) -> bool:
        return not (self.variant == "SE" and self.graph_only)

    @property
    def seq_input(self) -> int:
        return self.n_stat + (self.n_reg if self.uses_regulations else 0)

    @property
    def fusion_width(self) -> int:
        return (self.seq_hidden if self.uses_sequence else 0) + (self.graph_hidden if self.uses_graph else 0)

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.cell not in ("gru", "lstm"):
            raise ConfigError(f"cell must be 'gru' or 'lstm', got {self.cell!r}")
        if self.head not in ("linear", "softmax"):
            raise ConfigError(f"head must be 'linear' or 'softmax', got {self.head!r}")
        if self.horizon < 1 or self.window < 1:
            raise ConfigError("horizon and window must be >= 1")
        if self.n_stat < 1 or not 1 <= self.n_targets <= self.n_stat:
            raise ConfigError("need n_stat >= 1 and 1 <= n_targets <= n_stat")
        if self.uses_graph and (self.n_nodes < 1 or self.emb_dim < 1 or self.graph_hidden < 1
                                or self.node_emb_dim < 1):
            raise ConfigError(f"variant {self.variant} needs n_nodes, emb_dim, graph_hidden, node_emb_dim >= 1")
        if self.uses_regulations and self.n_reg < 1:
            raise ConfigError(f"variant {self.variant} needs at least one regulation feature")
        if self.uses_sequence and self.seq_hidden < 1:
            raise ConfigError("seq_hidden must be >= 1")
        if self.graph_only and self.variant != "SE":
            raise ConfigError("graph_only applies to the SE variant only")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d).validate()


def param_spec(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes in their fixed declared order."""
    spec: list[tuple[str, tuple[int, ...]]] = []
    if cfg.uses_sequence:
        spec += [(f"seq.{k}", s) for k, s in param_shapes(cfg.cell, cfg.seq_hidden, cfg.seq_input).items()]
    if cfg.uses_graph:
        N, De, DH, DX = cfg.n_nodes, cfg.node_emb_dim, cfg.graph_hidden, cfg.emb_dim
        for name in _embedding_names(cfg):
            spec.append((f"graph.{name}", (N, De)))
        for block in CONV_BLOCKS:
            d_in = DH if block.endswith("_h") else DX
            spec.append((f"graph.{block}.W", (De, d_in, DH)))
            spec.append((f"graph.{block}.b", (De, DH)))
        spec += [("graph.b_U", (DH,)), ("graph.b_H", (DH,))]
    spec += [("head.W", (cfg.fusion_width, cfg.n_targets)), ("head.b", (cfg.n_targets,))]
    return spec


def _embedding_names(cfg: ModelConfig) -> list[str]:
    names = ["E_H"] if cfg.tie_embeddings else ["E_H", "E_X"]
    if cfg.separate_candidate_embeddings:
        names += [f"{n}_cand" for n in names]
    return names


def _embedding_for(cfg: ModelConfig, block: str) -> str:
    side = "E_H" if (block.endswith("_h") or cfg.tie_embeddings) else "E_X"
    if cfg.separate_candidate_embeddings and block.startswith("cand"):
        side += "_cand"
    return f"graph.{side}"


def parameter_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for _, s in param_spec(cfg)))


@dataclass
class MGLModel:
    config: ModelConfig
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = param_spec(self.config)
        if [k for k, _ in expected] != list(self.params):
            raise ConfigError("parameter names do not match the configuration")
        for name, shape in expected:
            if self.params[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    def leaves(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def copy(self) -> "MGLModel":
        return MGLModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def with_params(self, params: dict[str, np.ndarray]) -> "MGLModel":
        return MGLModel(self.config, dict(params))

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def init_model(cfg: ModelConfig, seed: int = 0) -> MGLModel:
    cfg.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_spec(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("E_"):
            params[name] = rng.uniform(-0.1, 0.1, size=shape)
        elif leaf.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = glorot_uniform(rng, shape)
    return MGLModel(cfg, params)


def _graph_params(cfg: ModelConfig, leaves: dict[str, Tensor]) -> TemporalGraphParams:
    blocks = {
        b: AdaptiveGraphConvParams(leaves[_embedding_for(cfg, b)], leaves[f"graph.{b}.W"], leaves[f"graph.{b}.b"])
        for b in CONV_BLOCKS
    }
    return TemporalGraphParams(**blocks, b_U=leaves["graph.b_U"], b_H=leaves["graph.b_H"])


def forward_batch(cfg: ModelConfig, leaves: dict[str, Tensor], batch: WindowBatch) -> Tensor:
    """Predictions ``B x K`` for a batch of windows (normalised inputs)."""
    d = batch.stat.shape[1]
    if d != cfg.window or batch.stat.shape[2] != cfg.n_stat:
        raise ConfigError(f"stat windows {batch.stat.shape[1:]} do not match window {cfg.window} x {cfg.n_stat}")
    parts = []
    if cfg.uses_sequence:
        seq = batch.stat
        if cfg.uses_regulations:
            if batch.reg.shape[1:] != (d, cfg.n_reg):
                raise ConfigError(f"regulation windows {batch.reg.shape[1:]} do not match {d} x {cfg.n_reg}")
            seq = np.concatenate([batch.stat, batch.reg], axis=2)
        cell = cell_from_arrays(cfg.cell, {k[4:]: v for k, v in leaves.items() if k.startswith("seq.")})
        parts.append(run_sequence(cell, Tensor(seq)))
    if cfg.uses_graph:
        if batch.graph is None or batch.graph.shape[1:] != (d, cfg.n_nodes, cfg.emb_dim):
            got = None if batch.graph is None else batch.graph.shape[1:]
            raise ConfigError(f"graph windows {got} do not match {d} x {cfg.n_nodes} x {cfg.emb_dim}")
        H = run_temporal_graph(_graph_params(cfg, leaves), Tensor(batch.graph))
        parts.append(ad.mean(H, axis=1))
    fused = parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)
    return linear_head(leaves["head.W"], fused, leaves["head.b"], activation=cfg.head)


def forward(model: MGLModel, window: WindowSample | WindowBatch) -> Tensor:
    batch = window if isinstance(window, WindowBatch) else stack_windows([window])
    return forward_batch(model.config, model.leaves(), batch)


def predict(model: MGLModel, batch: WindowBatch, chunk: int = 256) -> np.ndarray:
    leaves = model.leaves()
    outs = []
    for lo in range(0, len(batch), chunk):
        sl = slice(lo, lo + chunk)
        sub = WindowBatch(batch.stat[sl], batch.reg[sl], None if batch.graph is None else batch.graph[sl],
                          batch.target[sl], batch.target_index[sl])
        outs.append(forward_batch(model.config, leaves, sub).numpy())
    return np.concatenate(outs, axis=0)


def loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over every entry."""
    target = ad.as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"loss: prediction {pred.shape} and target {target.shape} differ")
    diff = ad.sub(pred, target)
    return ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / diff.size)


# ---------------------------------------------------------------------------
# checkpoint file
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"MGLM"
CHECKPOINT_VERSION = 1
_U32 = struct.Struct("<I")


def save_checkpoint(path, model: MGLModel, meta: dict | None = None,
                    extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``MGLM``, version, JSON header (config, meta, tensor index), then float64 LE tensors.

    Parameters follow :func:`param_spec` order; ``extra`` tensors (normaliser
    statistics) come after them in the order given.
    """
    extra = extra or {}
    header = {
        "config": asdict(model.config),
        "meta": meta or {},
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
        "extra": [[k, list(np.shape(v))] for k, v in extra.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_U32.pack(CHECKPOINT_VERSION))
        fh.write(_U32.pack(len(blob)))
        fh.write(blob)
        for arrays in (model.params, extra):
            for v in arrays.values():
                fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[MGLModel, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r} at byte 0")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header at byte {len(raw)}")
    (version,) = _U32.unpack_from(raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version} at byte 4")
    (n,) = _U32.unpack_from(raw, 8)
    try:
        header = json.loads(raw[12:12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable config block at byte 12") from exc
    cfg = ModelConfig.from_dict(header["config"])
    offset = 12 + n

    def read(index):
        nonlocal offset
        out = {}
        for name, shape in index:
            count = int(np.prod(shape))
            end = offset + 8 * count
            if end > len(raw):
                raise FormatError(f"{path}: tensor {name} runs past end of file at byte {offset}")
            out[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
            offset = end
        return out

    params = read(header["params"])
    extra = read(header["extra"])
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after byte {offset}")
    return MGLModel(cfg, params), header["meta"], extra
