from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dovi.ridge import AlgoConfig, RidgeState, chol_update, info_gain, normalized_info_gain


def _unit(rng, d):
    x = rng.normal(size=d)
    return x / max(1.0, np.linalg.norm(x)) * rng.uniform(0.1, 1.0)


def test_d1_worked_example():
    st_ = RidgeState(1, 1.0)
    assert st_.bonus(np.array([1.0]), 1.0) == pytest.approx(0.832554611, abs=1e-9)
    st_.add_feature(np.array([1.0]), reward=1.0, next_index=0)
    assert st_.Lambda.tolist() == [[2.0]]
    assert st_.logdet == pytest.approx(math.log(2), abs=1e-15)
    assert st_.solve(st_.rewards).tolist() == pytest.approx([0.5], abs=1e-15)
    assert st_.bonus(np.array([1.0]), 1.0) == pytest.approx(math.sqrt(math.log(1.5)), abs=1e-15)


def test_determinant_lemma_1000_cases():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 17))
        B = rng.normal(size=(d, d))
        Lam = B @ B.T + rng.uniform(0.1, 2.0) * np.eye(d)
        x = rng.normal(size=d)
        lhs = np.linalg.slogdet(Lam + np.outer(x, x))[1] - np.linalg.slogdet(Lam)[1]
        rhs = math.log1p(x @ np.linalg.solve(Lam, x))
        worst = max(worst, abs(lhs - rhs))
    assert worst <= 1e-8


def test_bonus_equals_logdet_increment():
    rng = np.random.default_rng(1)
    st_ = RidgeState(6, 1.0)
    for _ in range(40):
        st_.add_feature(_unit(rng, 6))
    x = _unit(rng, 6)
    twin = st_.snapshot()
    twin.add_feature(x)
    assert st_.bonus(x, 1.0) == pytest.approx(math.sqrt(twin.logdet - st_.logdet), abs=1e-10)


def test_incremental_matches_refactor_after_10k_updates():
    rng = np.random.default_rng(2)
    d = 8
    st_ = RidgeState(d, 1.0, refactor_every=10**9)     # pure rank-1 path
    X = np.zeros((10**4, d))
    for i in range(10**4):
        if i % 3 == 0:                                  # mix sparse one-hots with dense vectors
            x = np.zeros(d)
            x[rng.integers(d)] = 1.0
        else:
            x = _unit(rng, d)
        X[i] = x
        st_.add_feature(x)
    dense = np.eye(d) + X.T @ X
    assert np.abs(st_.Lambda - dense).max() <= 1e-8 * np.abs(dense).max()
    assert abs(st_.logdet - np.linalg.slogdet(dense)[1]) <= 1e-8
    assert np.abs(st_.chol @ st_.chol.T - dense).max() <= 1e-8 * np.abs(dense).max()
    full = np.linalg.cholesky(dense)
    assert np.abs(st_.chol - full).max() <= 1e-8 * np.abs(full).max()


def test_incremental_logdet_after_50_adds():
    rng = np.random.default_rng(3)
    st_ = RidgeState(5, 0.5)
    for _ in range(50):
        st_.add_feature(_unit(rng, 5))
    assert abs(st_.logdet - st_.logdet_direct()) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 16), n=st.integers(0, 60))
def test_property_solve_vs_dense_inverse(seed, d, n):
    rng = np.random.default_rng(seed)
    st_ = RidgeState(d, float(rng.uniform(0.2, 3.0)))
    X = np.array([_unit(rng, d) for _ in range(n)]).reshape(n, d)
    y = rng.normal(size=n)
    st_.add_features(X[: n // 2], y[: n // 2], pool="offline")
    for x, r in zip(X[n // 2:], y[n // 2:]):
        st_.add_feature(x, r)
    Lam = st_.lam * np.eye(d) + X.T @ X
    want = np.linalg.inv(Lam) @ (X.T @ y)
    got = st_.solve(y)
    scale = max(1.0, np.abs(want).max())
    assert np.abs(got - want).max() <= 1e-8 * scale


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 10))
def test_property_bonus_monotone(seed, d):
    rng = np.random.default_rng(seed)
    st_ = RidgeState(d, 1.0)
    probe = np.array([_unit(rng, d) for _ in range(5)])
    prev = st_.bonus(probe, 1.3)
    for _ in range(30):
        x = _unit(rng, d)
        before_x = st_.bonus(x, 1.0)
        st_.add_feature(x)
        assert st_.bonus(x, 1.0) < before_x
        cur = st_.bonus(probe, 1.3)
        assert np.all(cur <= prev + 1e-12)
        prev = cur


def test_pools_and_provenance():
    st_ = RidgeState(3)
    st_.add_features(np.eye(3)[:2], [0.1, 0.2], [4, 5], pool="offline")
    st_.add_feature(np.eye(3)[2], 0.3, 6, pool="online")
    assert (st_.n_offline, st_.n_online) == (2, 1)
    assert st_.next_index.tolist() == [4, 5, 6]
    assert st_.rewards.tolist() == [0.1, 0.2, 0.3]
    assert st_.features.shape == (3, 3)


def test_input_checks():
    st_ = RidgeState(3)
    with pytest.raises(ValueError, match="dimension"):
        st_.add_feature(np.ones(4) / 2)
    with pytest.raises(ValueError, match="norm"):
        st_.add_feature(np.ones(3))
    with pytest.raises(ValueError, match="targets"):
        st_.solve(np.ones(2))
    with pytest.raises(ValueError):
        RidgeState(0)
    with pytest.raises(ValueError):
        RidgeState(2, lam=0.0)


def test_chol_update_matches_numpy():
    rng = np.random.default_rng(4)
    B = rng.normal(size=(5, 5))
    A = B @ B.T + np.eye(5)
    L = np.linalg.cholesky(A)
    x = rng.normal(size=5)
    chol_update(L, x)
    assert np.allclose(L, np.linalg.cholesky(A + np.outer(x, x)), atol=1e-12)


def test_snapshot_is_independent():
    st_ = RidgeState(2)
    snap = st_.snapshot()
    st_.add_feature(np.array([1.0, 0.0]))
    assert snap.logdet == 0.0 and snap.size == 0
    assert info_gain(snap, st_) == pytest.approx(math.log(2))


def test_canonical_stream_information_gain():
    # uniform canonical-basis stream, n = 0, lambda = 1, d = 4, K = 400: exact direct logdet,
    # sandwiched by the isotropic approximation
    rng = np.random.default_rng(5)
    d, K = 4, 400
    st_ = RidgeState(d, 1.0)
    counts = np.zeros(d)
    for _ in range(K):
        i = rng.integers(d)
        counts[i] += 1
        st_.add_feature(np.eye(d)[i])
    assert st_.logdet == pytest.approx(np.log1p(counts).sum(), abs=1e-9)
    approx = d * math.log1p(K / d)
    assert abs(st_.logdet - approx) <= 0.05 * approx


def test_normalized_info_gain():
    assert normalized_info_gain([4.0, 9.0], d=1, horizon=2) == pytest.approx(2.5)
    assert normalized_info_gain([-1e-18, 0.0], d=3, horizon=2) == 0.0


def test_algo_config_validation_and_beta():
    cfg = AlgoConfig(K=10, beta_scale=0.5, zeta=0.1)
    assert cfg.beta_for(4, 2, 0) == pytest.approx(0.5 * 4 * 2 * math.sqrt(math.log(4 * 20 / 0.1)))
    assert cfg.beta_for(4, 2, 100) > cfg.beta_for(4, 2, 0)
    assert AlgoConfig(K=1, beta=0.3).beta_for(4, 2, 0) == 0.3
    assert cfg.cap(0, 2) == 2.0 and cfg.cap(1, 2) == 1.0
    assert AlgoConfig(K=1, value_cap="strict").cap(0, 2) == 1.0
    assert cfg.half_cap(0, 2) == 1.0 and cfg.half_cap(1, 2) == 0.0
    for bad in (dict(K=-1), dict(K=1, zeta=0.0), dict(K=1, zeta=1.5), dict(K=1, mode="greedy"),
                dict(K=1, beta_scale=0.0), dict(K=1, value_cap="other"), dict(K=1, lam=-1.0)):
        with pytest.raises(ValueError):
            AlgoConfig(**bad)
