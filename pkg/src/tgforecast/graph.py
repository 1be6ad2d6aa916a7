"""Graph convolutions and the temporal graph GRU.

Node features are ``N x D`` for a single snapshot or ``B x N x D`` for a batch
of independent snapshots that share parameters.

The adaptive convolution follows the AGCRN construction: a learnable node
embedding ``E`` (``N x D_emb``) both defines the support

    S = I_N + softmax_rows(relu(E @ E.T))

and synthesises node-specific weights from shared pools,

    Theta[n] = sum_k E[n, k] * W_pool[k]      (D_in x D_out)
    beta[n]  = E[n] @ b_pool                   (D_out,)

so that ``Y[n] = (S @ X)[n] @ Theta[n] + beta[n]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, EmptyInputError


@dataclass
class AdaptiveGraphConvParams:
    E: Tensor        # N x D_emb
    W_pool: Tensor   # D_emb x D_in x D_out
    b_pool: Tensor   # D_emb x D_out

    def __post_init__(self):
        n_emb = self.E.shape[1] if self.E.ndim == 2 else -1
        if (self.E.ndim != 2 or self.E.shape[0] < 1 or n_emb < 1 or self.W_pool.ndim != 3
                or self.W_pool.shape[0] != n_emb or self.b_pool.shape != (n_emb, self.W_pool.shape[2])):
            raise DimensionError(
                f"inconsistent adaptive conv params: E {self.E.shape}, W_pool {self.W_pool.shape}, "
                f"b_pool {self.b_pool.shape}")

    @property
    def in_dim(self) -> int:
        return self.W_pool.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W_pool.shape[2]


@dataclass
class TemporalGraphParams:
    """Four adaptive convolutions plus the gate and candidate biases.

    ``gate_h``/``cand_h`` act on the hidden state and normally share ``E_H``;
    ``gate_x``/``cand_x`` act on the input snapshot and share ``E_X``.  Sharing
    is by object identity, so tying ``E_H`` and ``E_X`` is just passing the
    same tensor.
    """

    gate_h: AdaptiveGraphConvParams
    gate_x: AdaptiveGraphConvParams
    cand_h: AdaptiveGraphConvParams
    cand_x: AdaptiveGraphConvParams
    b_U: Tensor
    b_H: Tensor

    def __post_init__(self):
        d_h = self.gate_h.out_dim
        d_x = self.gate_x.in_dim
        ok = (self.gate_h.in_dim == d_h and self.cand_h.in_dim == d_h and self.cand_h.out_dim == d_h
              and self.gate_x.out_dim == d_h and self.cand_x.out_dim == d_h and self.cand_x.in_dim == d_x
              and self.b_U.shape == (d_h,) and self.b_H.shape == (d_h,))
        nodes = {c.E.shape[0] for c in (self.gate_h, self.gate_x, self.cand_h, self.cand_x)}
        if not ok or len(nodes) != 1:
            raise DimensionError("temporal graph params: hidden/input widths or node counts disagree")

    @property
    def hidden_dim(self) -> int:
        return self.gate_h.out_dim

    @property
    def input_dim(self) -> int:
        return self.gate_x.in_dim

    @property
    def num_nodes(self) -> int:
        return self.gate_h.E.shape[0]


def normalized_support(A) -> Tensor:
    """``I + D^-1/2 A D^-1/2`` for a fixed non-negative adjacency.

    Nodes with zero degree keep only their identity entry.
    """
    a = np.asarray(A.data if isinstance(A, Tensor) else A, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"adjacency must be square, got {a.shape}")
    if np.any(a < 0):
        raise ContractError("adjacency has negative entries")
    deg = a.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = deg[nz] ** -0.5
    return Tensor(np.eye(a.shape[0]) + inv_sqrt[:, None] * a * inv_sqrt[None, :])


def similarity_adjacency(X) -> Tensor:
    """Dot-product similarity ``X @ X.T`` (analysis only; the model uses the adaptive support)."""
    X = ad.as_tensor(X)
    return ad.matmul(X, ad.transpose(X))


def adaptive_support(E: Tensor) -> Tensor:
    n = E.shape[0]
    return ad.add(ad.softmax_rows(ad.relu(ad.matmul(E, ad.transpose(E)))), Tensor(np.eye(n)))


@dataclass
class _PreparedConv:
    support: Tensor
    theta: Tensor   # N x D_in x D_out
    beta: Tensor    # N x D_out


def _prepare(p: AdaptiveGraphConvParams, supports: dict | None = None) -> _PreparedConv:
    if supports is None:
        support = adaptive_support(p.E)
    else:
        key = id(p.E)
        if key not in supports:
            supports[key] = adaptive_support(p.E)
        support = supports[key]
    theta = ad.einsum("ne,eio->nio", p.E, p.W_pool)
    beta = ad.matmul(p.E, p.b_pool)
    return _PreparedConv(support, theta, beta)


def _lead(ndim: int) -> str:
    return "abc"[:ndim - 2]


def _propagate(support: Tensor, X: Tensor) -> Tensor:
    lead = _lead(X.ndim)
    return ad.einsum(f"nm,{lead}md->{lead}nd", support, X)


def _apply(theta: Tensor, beta: Tensor, SX: Tensor) -> Tensor:
    lead = _lead(SX.ndim)
    return ad.add(ad.einsum(f"{lead}nd,ndo->{lead}no", SX, theta), beta)


def _conv(prep: _PreparedConv, X: Tensor) -> Tensor:
    return _apply(prep.theta, prep.beta, _propagate(prep.support, X))


def _check_features(X: Tensor, n: int, d: int, what: str) -> None:
    if X.ndim < 2 or X.ndim > 5 or X.shape[-2:] != (n, d):
        raise DimensionError(f"{what}: expected (B x) {n} x {d} node features, got {X.shape}")


def adaptive_graph_conv(p: AdaptiveGraphConvParams, X) -> Tensor:
    X = ad.as_tensor(X)
    _check_features(X, p.E.shape[0], p.in_dim, "adaptive_graph_conv")
    return _conv(_prepare(p), X)


class _PreparedTG:
    """Supports and node-specific weights computed once per forward pass.

    Input-side convolutions do not depend on the hidden state, so they can be
    evaluated for a whole window at once; hidden-side gate and candidate
    convolutions are fused when they share a support.
    """

    def __init__(self, p: TemporalGraphParams):
        supports: dict = {}
        self.params = p
        self.gate_h = _prepare(p.gate_h, supports)
        self.gate_x = _prepare(p.gate_x, supports)
        self.cand_h = _prepare(p.cand_h, supports)
        self.cand_x = _prepare(p.cand_x, supports)
        self.fused_h = None
        if self.gate_h.support is self.cand_h.support:
            self.fused_h = (ad.concat([self.gate_h.theta, self.cand_h.theta], axis=2),
                            ad.concat([self.gate_h.beta, self.cand_h.beta], axis=1))

    def input_terms(self, X: Tensor) -> tuple[Tensor, Tensor]:
        p = self.params
        _check_features(X, p.num_nodes, p.input_dim, "temporal graph snapshot")
        SX = _propagate(self.gate_x.support, X)
        SX_c = SX if self.cand_x.support is self.gate_x.support else _propagate(self.cand_x.support, X)
        return (_apply(self.gate_x.theta, self.gate_x.beta, SX),
                _apply(self.cand_x.theta, self.cand_x.beta, SX_c))

    def hidden_terms(self, H: Tensor) -> tuple[Tensor, Tensor]:
        if self.fused_h is not None:
            both = _apply(*self.fused_h, _propagate(self.gate_h.support, H))
            d_h = self.params.hidden_dim
            return ad.slice_axis(both, 0, d_h), ad.slice_axis(both, d_h, 2 * d_h)
        return _conv(self.gate_h, H), _conv(self.cand_h, H)

    def combine(self, H_prev: Tensor, x_gate: Tensor, x_cand: Tensor) -> Tensor:
        p = self.params
        _check_features(H_prev, p.num_nodes, p.hidden_dim, "temporal graph hidden state")
        if H_prev.shape != x_gate.shape:
            raise DimensionError(f"hidden state {H_prev.shape} and snapshot terms {x_gate.shape} disagree")
        h_gate, h_cand = self.hidden_terms(H_prev)
        update = ad.sigmoid(ad.add(ad.add(h_gate, x_gate), p.b_U))
        forget = 1.0 - update
        candidate = ad.tanh(ad.add(ad.add(h_cand, x_cand), p.b_H))
        return ad.add(ad.mul(update, candidate), ad.mul(forget, H_prev))

    def step(self, H_prev: Tensor, X_t: Tensor) -> Tensor:
        return self.combine(H_prev, *self.input_terms(X_t))


def tg_gru_step(p: TemporalGraphParams, H_prev, X_t) -> Tensor:
    return _PreparedTG(p).step(ad.as_tensor(H_prev), ad.as_tensor(X_t))


def run_temporal_graph(p: TemporalGraphParams, snapshots: Sequence | np.ndarray | Tensor) -> Tensor:
    """Fold :func:`tg_gru_step` over a window, starting from zero hidden state.

    ``snapshots`` is a sequence of ``N x D_X`` (or ``B x N x D_X``) arrays, or a
    single array with time on axis 0 (``d x N x D_X``) or axis 1 (``B x d x N x D_X``).
    Returns the final per-node hidden states.
    """
    prepared = _PreparedTG(p)
    if isinstance(snapshots, (np.ndarray, Tensor)):
        arr = ad.as_tensor(snapshots)
        if arr.ndim not in (3, 4):
            raise DimensionError(f"window must be d x N x D or B x d x N x D, got {arr.shape}")
        axis = 0 if arr.ndim == 3 else 1
        steps = arr.shape[axis]
        if steps == 0:
            raise EmptyInputError("run_temporal_graph: empty window")
        x_gate, x_cand = prepared.input_terms(arr)
        terms = [(ad.index_axis(x_gate, t, axis), ad.index_axis(x_cand, t, axis)) for t in range(steps)]
    else:
        frames = [ad.as_tensor(s) for s in snapshots]
        if not frames:
            raise EmptyInputError("run_temporal_graph: empty window")
        terms = [prepared.input_terms(f) for f in frames]
    H = Tensor(np.zeros(terms[0][0].shape))
    for x_gate, x_cand in terms:
        H = prepared.combine(H, x_gate, x_cand)
    return H
