import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import conv_params, grad_check, oracle_params, tg_arrays, tg_params
from tgforecast import autodiff as ad
from tgforecast.errors import ContractError, DimensionError, EmptyInputError
from tgforecast.graph import (AdaptiveGraphConvParams, TemporalGraphParams, adaptive_graph_conv, adaptive_support,
                              normalized_support, run_temporal_graph, similarity_adjacency, tg_gru_step)

# fixed supports -------------------------------------------------------------

def test_normalized_support_examples():
    assert np.array_equal(normalized_support(np.zeros((3, 3))).data, np.eye(3))
    assert np.array_equal(normalized_support([[0, 1], [1, 0]]).data, np.ones((2, 2)))
    assert np.array_equal(normalized_support(np.eye(3)).data, 2 * np.eye(3))


def test_normalized_support_rejects_negative():
    with pytest.raises(ContractError):
        normalized_support([[0, -1], [-1, 0]])


def test_similarity_adjacency_examples(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert np.allclose(similarity_adjacency(Q).data, np.eye(3), atol=1e-14)
    assert not similarity_adjacency(np.zeros((2, 4))).data.any()
    X = rng.normal(size=(2, 2))
    ref = [[sum(X[i, k] * X[j, k] for k in range(2)) for j in range(2)] for i in range(2)]
    assert np.allclose(similarity_adjacency(X).data, ref, atol=1e-14)


# adaptive support -----------------------------------------------------------

def test_adaptive_support_examples():
    assert np.allclose(adaptive_support(ad.tensor(np.zeros((4, 2)))).data, np.eye(4) + 0.25, atol=1e-15)
    assert adaptive_support(ad.tensor([[0.7, -3.0]])).data.tolist() == [[2.0]]
    e = math.e
    ref = np.eye(2) + np.array([[e / (e + 1), 1 / (e + 1)], [1 / (e + 1), e / (e + 1)]])
    assert np.allclose(adaptive_support(ad.tensor(np.eye(2))).data, ref, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_adaptive_support_rows(N, De, seed):
    E = np.random.default_rng(seed).normal(size=(N, De)) * 3
    soft = adaptive_support(ad.tensor(E)).data - np.eye(N)
    assert np.all(np.abs(soft.sum(axis=1) - 1.0) < 1e-12)
    assert np.all(soft > 0)


# adaptive conv --------------------------------------------------------------

def test_conv_zero_embedding_gives_zero(rng):
    p = conv_params(np.zeros((3, 2)), rng.normal(size=(2, 4, 5)), rng.normal(size=(2, 5)))
    assert not adaptive_graph_conv(p, rng.normal(size=(3, 4))).data.any()


def test_conv_single_node_hand_case(rng):
    W0, b0, X = rng.normal(size=(1, 3, 2)), rng.normal(size=(1, 2)), rng.normal(size=(1, 3))
    got = adaptive_graph_conv(conv_params([[1.0]], W0, b0), X).data
    assert np.allclose(got, 2 * X @ W0[0] + b0, atol=1e-14)


def test_conv_matches_oracle(rng):
    E, W, b, X = rng.normal(size=(2, 2)), rng.normal(size=(2, 1, 1)), rng.normal(size=(2, 1)), rng.normal(size=(2, 1))
    got = adaptive_graph_conv(conv_params(E, W, b), X).data
    assert np.max(np.abs(got - np.array(oracles.adaptive_conv(E.tolist(), W.tolist(), b.tolist(), X.tolist())))) < 1e-12


def test_conv_homogeneous_part_linear(rng):
    p = conv_params(rng.normal(size=(4, 2)), rng.normal(size=(2, 3, 2)), rng.normal(size=(2, 2)))
    X1, X2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    a, b = 1.7, -0.4

    def lin(X):
        return adaptive_graph_conv(p, X).data - adaptive_graph_conv(p, np.zeros((4, 3))).data
    assert np.allclose(lin(a * X1 + b * X2), a * lin(X1) + b * lin(X2), atol=1e-9)


def test_conv_batched_equals_per_snapshot(rng):
    p = conv_params(rng.normal(size=(3, 2)), rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 2)))
    X = rng.normal(size=(5, 3, 4))
    out = adaptive_graph_conv(p, X).data
    for i in range(5):
        assert np.allclose(out[i], adaptive_graph_conv(p, X[i]).data, atol=1e-14)


def test_conv_shape_errors(rng):
    p = conv_params(rng.normal(size=(3, 2)), rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 2)))
    with pytest.raises(DimensionError):
        adaptive_graph_conv(p, np.zeros((2, 4)))
    with pytest.raises(DimensionError):
        conv_params(rng.normal(size=(3, 2)), rng.normal(size=(3, 4, 2)), rng.normal(size=(2, 2)))


# temporal graph GRU ---------------------------------------------------------

def test_tg_zero_params_halves_state(rng):
    arr = {k: np.zeros_like(v) for k, v in tg_arrays(rng, 3, 2, 4, 2).items()}
    H = rng.normal(size=(3, 2))
    assert np.array_equal(tg_gru_step(tg_params(arr), H, rng.normal(size=(3, 4))).data, 0.5 * H)


def test_tg_zero_state_zero_params(rng):
    arr = {k: np.zeros_like(v) for k, v in tg_arrays(rng, 3, 2, 4, 2).items()}
    assert not tg_gru_step(tg_params(arr), np.zeros((3, 2)), rng.normal(size=(3, 4))).data.any()


def test_tg_matches_oracle(rng):
    arr = tg_arrays(rng, 2, 1, 1, 2)
    H, X = rng.normal(size=(2, 1)), rng.normal(size=(2, 1))
    got = tg_gru_step(tg_params(arr), H, X).data
    ref = np.array(oracles.tg_gru_step(oracle_params(arr), H.tolist(), X.tolist()))
    assert np.max(np.abs(got - ref)) < 1e-12


def test_tg_shape_errors(rng):
    p = tg_params(tg_arrays(rng, 3, 2, 4, 2))
    with pytest.raises(DimensionError):
        tg_gru_step(p, np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        tg_gru_step(p, np.zeros((3, 2)), np.zeros((2, 4)))


def test_run_temporal_graph_examples(rng):
    arr = tg_arrays(rng, 3, 2, 2, 2)
    p = tg_params(arr)
    X = rng.normal(size=(3, 3, 2))
    assert np.array_equal(run_temporal_graph(p, X[:1]).data, tg_gru_step(p, np.zeros((3, 2)), X[0]).data)
    zero = tg_params({k: np.zeros_like(v) for k, v in arr.items()})
    assert not run_temporal_graph(zero, X).data.any()
    ref = [[0.0, 0.0]] * 3
    for t in range(3):
        ref = oracles.tg_gru_step(oracle_params(arr), ref, X[t].tolist())
    assert np.max(np.abs(run_temporal_graph(p, X).data - np.array(ref))) < 1e-12
    assert np.allclose(run_temporal_graph(p, list(X)).data, ref, atol=1e-12)


def test_run_temporal_graph_empty(rng):
    with pytest.raises(EmptyInputError):
        run_temporal_graph(tg_params(tg_arrays(rng, 2, 2, 2, 2)), [])


def test_run_temporal_graph_batched(rng):
    p = tg_params(tg_arrays(rng, 3, 2, 2, 2, scale=0.5))
    X = rng.normal(size=(4, 5, 3, 2))
    out = run_temporal_graph(p, X).data
    for b in range(4):
        assert np.allclose(out[b], run_temporal_graph(p, X[b]).data, atol=1e-13)


def test_separate_embeddings_for_each_block(rng):
    arr = tg_arrays(rng, 2, 1, 1, 2)
    t = {k: ad.tensor(v) for k, v in arr.items()}
    E_cand = rng.normal(size=(2, 2))
    p = TemporalGraphParams(
        gate_h=AdaptiveGraphConvParams(t["E_H"], t["gate_h.W"], t["gate_h.b"]),
        gate_x=AdaptiveGraphConvParams(t["E_X"], t["gate_x.W"], t["gate_x.b"]),
        cand_h=AdaptiveGraphConvParams(ad.tensor(E_cand), t["cand_h.W"], t["cand_h.b"]),
        cand_x=AdaptiveGraphConvParams(t["E_X"], t["cand_x.W"], t["cand_x.b"]), b_U=t["b_U"], b_H=t["b_H"])
    H, X = rng.normal(size=(2, 1)), rng.normal(size=(2, 1))
    ref = oracle_params(arr)
    ref["cand_h"] = (E_cand.tolist(),) + ref["cand_h"][1:]
    assert np.max(np.abs(tg_gru_step(p, H, X).data - np.array(oracles.tg_gru_step(ref, H.tolist(), X.tolist())))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tg_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    N = 4
    arr = tg_arrays(rng, N, 3, 2, 2)
    H, X = rng.normal(size=(N, 3)), rng.normal(size=(N, 2))
    perm = rng.permutation(N)
    base = tg_gru_step(tg_params(arr), H, X).data
    parr = dict(arr, E_H=arr["E_H"][perm], E_X=arr["E_X"][perm])
    moved = tg_gru_step(tg_params(parr), H[perm], X[perm]).data
    assert np.max(np.abs(moved - base[perm])) < 1e-9


def test_gradients_conv(rng):
    arrays = {"E": rng.normal(size=(3, 2)), "W": rng.normal(size=(2, 3, 2)), "b": rng.normal(size=(2, 2)),
              "X": rng.normal(size=(3, 3))}

    def build(t):
        y = adaptive_graph_conv(AdaptiveGraphConvParams(t["E"], t["W"], t["b"]), t["X"])
        return ad.sum_all(ad.tanh(y))
    assert grad_check(build, arrays) < 1e-5


def test_gradients_tg_window(rng):
    arr = tg_arrays(rng, 3, 2, 2, 2, scale=0.7)
    arr["X"] = rng.normal(size=(3, 3, 2))

    def build(t):
        H = run_temporal_graph(tg_params({k: v for k, v in t.items() if k != "X"}), t["X"])
        return ad.sum_all(ad.mul(H, ad.tensor([[1.0, -0.5]] * 3)))
    assert grad_check(build, arr) < 1e-5
