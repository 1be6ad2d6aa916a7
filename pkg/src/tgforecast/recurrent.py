"""LSTM and GRU cells, a sequence fold, and the dense output head.

Row-vector convention throughout: a state is ``B x H`` (``B = 1`` for a single
sequence) and every weight multiplies from the right, ``h @ W_hu`` with
``W_hu`` of shape ``H x H`` and ``x @ W_xu`` with ``W_xu`` of shape ``D x H``.
Biases have shape ``(H,)`` and are added to every row.

The GRU follows its defining equations literally: the forget gate is
``1 - update`` and the candidate state is not reset-gated.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, EmptyInputError

LSTM_GATES = ("u", "f", "c", "o")
GRU_GATES = ("u", "h")


@dataclass
class LSTMParams:
    W_hu: Tensor
    W_xu: Tensor
    b_u: Tensor
    W_hf: Tensor
    W_xf: Tensor
    b_f: Tensor
    W_hc: Tensor
    W_xc: Tensor
    b_c: Tensor
    W_ho: Tensor
    W_xo: Tensor
    b_o: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_hu.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_xu.shape[0]


@dataclass
class GRUParams:
    W_hu: Tensor
    W_xu: Tensor
    b_u: Tensor
    W_hh: Tensor
    W_xh: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_hu.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_xu.shape[0]


@dataclass
class RecurrentState:
    h: Tensor
    c: Tensor | None = None


CellParams = Union[LSTMParams, GRUParams]


def param_shapes(cell: str, hidden: int, inputs: int) -> dict[str, tuple[int, ...]]:
    """Field name -> shape for a cell with ``hidden`` units over ``inputs`` features."""
    gates = {"lstm": LSTM_GATES, "gru": GRU_GATES}[cell]
    shapes: dict[str, tuple[int, ...]] = {}
    for g in gates:
        shapes[f"W_h{g}"] = (hidden, hidden)
        shapes[f"W_x{g}"] = (inputs, hidden)
        shapes[f"b_{g}"] = (hidden,)
    return shapes


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out)); fans are the last two axes."""
    fan_in, fan_out = (shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_cell_arrays(cell: str, hidden: int, inputs: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for name, shape in param_shapes(cell, hidden, inputs).items():
        out[name] = np.zeros(shape) if name.startswith("b_") else glorot_uniform(rng, shape)
    return out


def cell_from_arrays(cell: str, arrays: dict[str, np.ndarray | Tensor], requires_grad: bool = True) -> CellParams:
    cls = {"lstm": LSTMParams, "gru": GRUParams}[cell]
    kwargs = {}
    for f in fields(cls):
        v = arrays[f.name]
        kwargs[f.name] = v if isinstance(v, Tensor) else Tensor(v, requires_grad=requires_grad)
    return cls(**kwargs)


def _check(params: CellParams, h: Tensor, x: Tensor) -> None:
    H, D = params.hidden_size, params.input_size
    if h.ndim != 2 or x.ndim != 2 or h.shape[1] != H or x.shape[1] != D or h.shape[0] != x.shape[0]:
        raise DimensionError(
            f"recurrent step expects h (B x {H}) and x (B x {D}); got {h.shape} and {x.shape}")


def _affine(h: Tensor, x: Tensor, W_h: Tensor, W_x: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.add(ad.matmul(h, W_h), ad.matmul(x, W_x)), b)


def lstm_step(p: LSTMParams, state: RecurrentState, x_t: Tensor) -> RecurrentState:
    h, c = state.h, state.c
    _check(p, h, x_t)
    if c is None or c.shape != h.shape:
        raise DimensionError(f"LSTM cell state must match hidden state {h.shape}")
    update = ad.sigmoid(_affine(h, x_t, p.W_hu, p.W_xu, p.b_u))
    forget = ad.sigmoid(_affine(h, x_t, p.W_hf, p.W_xf, p.b_f))
    candidate = ad.tanh(_affine(h, x_t, p.W_hc, p.W_xc, p.b_c))
    c_t = ad.add(ad.mul(update, candidate), ad.mul(forget, c))
    out = ad.sigmoid(_affine(h, x_t, p.W_ho, p.W_xo, p.b_o))
    return RecurrentState(h=ad.mul(out, ad.tanh(c_t)), c=c_t)


def gru_step(p: GRUParams, h_prev: Tensor, x_t: Tensor) -> Tensor:
    _check(p, h_prev, x_t)
    update = ad.sigmoid(_affine(h_prev, x_t, p.W_hu, p.W_xu, p.b_u))
    forget = 1.0 - update
    candidate = ad.tanh(_affine(h_prev, x_t, p.W_hh, p.W_xh, p.b_h))
    return ad.add(ad.mul(update, candidate), ad.mul(forget, h_prev))


def zero_state(params: CellParams, batch: int = 1) -> RecurrentState:
    h = Tensor(np.zeros((batch, params.hidden_size)))
    c = Tensor(np.zeros((batch, params.hidden_size))) if isinstance(params, LSTMParams) else None
    return RecurrentState(h=h, c=c)


def run_sequence(params: CellParams, x_seq) -> Tensor:
    """Fold the cell over time from a zero state; return the last hidden state.

    ``x_seq`` is ``d x D`` for one sequence (result ``1 x H``) or ``B x d x D``
    for a batch of sequences (result ``B x H``).
    """
    x_seq = ad.as_tensor(x_seq)
    if x_seq.ndim == 2:
        x_seq = ad.reshape(x_seq, (1,) + x_seq.shape)
    if x_seq.ndim != 3:
        raise DimensionError(f"run_sequence expects d x D or B x d x D input, got {x_seq.shape}")
    batch, steps = x_seq.shape[0], x_seq.shape[1]
    if steps == 0:
        raise EmptyInputError("run_sequence: empty input sequence")
    state = zero_state(params, batch)
    for t in range(steps):
        x_t = ad.index_axis(x_seq, t, axis=1)
        if isinstance(params, LSTMParams):
            state = lstm_step(params, state, x_t)
        else:
            state = RecurrentState(h=gru_step(params, state.h, x_t))
    return state.h


def linear_head(W: Tensor, h: Tensor, b: Tensor | None = None, activation: str = "linear") -> Tensor:
    """``h @ W (+ b)``; ``activation="softmax"`` normalises each output row."""
    if h.ndim != 2 or W.ndim != 2 or h.shape[1] != W.shape[0]:
        raise DimensionError(f"linear_head: h {h.shape} does not fit W {W.shape}")
    y = ad.matmul(h, W)
    if b is not None:
        y = ad.add(y, b)
    if activation == "softmax":
        y = ad.softmax_rows(y)
    elif activation != "linear":
        raise ValueError(f"unknown head activation {activation!r}")
    return y
