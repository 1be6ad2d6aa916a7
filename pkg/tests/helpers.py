"""Gradient checking and graph-parameter builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from tgforecast import autodiff as ad
from tgforecast.graph import AdaptiveGraphConvParams, TemporalGraphParams


def grad_check(build, arrays: dict[str, np.ndarray], h: float = 1e-6) -> float:
    """Largest relative error between backward() and central differences over every array.

    ``build`` maps a dict of tensors to a scalar tensor.
    """
    leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in arrays.items()}
    out = build(leaves)
    ad.backward(out)
    worst = 0.0
    for name, value in arrays.items():
        def f(x, name=name):
            trial = {k: ad.Tensor(x if k == name else v) for k, v in arrays.items()}
            return build(trial).item()
        numeric = ad.finite_difference_grad(f, value, h)
        worst = max(worst, ad.max_relative_error(leaves[name].grad, numeric))
    return worst


BLOCKS = ("gate_h", "gate_x", "cand_h", "cand_x")


def conv_params(E, W, b):
    return AdaptiveGraphConvParams(ad.tensor(E), ad.tensor(W), ad.tensor(b))


def tg_arrays(rng, N, DH, DX, De, scale=1.0, shared=True):
    E_H, E_X = rng.normal(size=(N, De)) * scale, rng.normal(size=(N, De)) * scale
    out = {"E_H": E_H, "E_X": E_X}
    for blk in BLOCKS:
        d_in = DH if blk.endswith("_h") else DX
        out[f"{blk}.W"] = rng.normal(size=(De, d_in, DH)) * scale
        out[f"{blk}.b"] = rng.normal(size=(De, DH)) * scale
    out["b_U"] = rng.normal(size=DH) * scale
    out["b_H"] = rng.normal(size=DH) * scale
    return out


def tg_params(arr, as_tensor=ad.tensor):
    t = {k: v if isinstance(v, ad.Tensor) else as_tensor(v) for k, v in arr.items()}
    blocks = {b: AdaptiveGraphConvParams(t["E_H"] if b.endswith("_h") else t["E_X"], t[f"{b}.W"], t[f"{b}.b"])
              for b in BLOCKS}
    return TemporalGraphParams(**blocks, b_U=t["b_U"], b_H=t["b_H"])


def oracle_params(arr):
    L = {k: np.asarray(v).tolist() for k, v in arr.items()}
    p = {b: (L["E_H"] if b.endswith("_h") else L["E_X"], L[f"{b}.W"], L[f"{b}.b"]) for b in BLOCKS}
    p["b_U"], p["b_H"] = L["b_U"], L["b_H"]
    return p
