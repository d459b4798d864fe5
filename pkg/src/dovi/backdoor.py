"""Optimistic least-squares value iteration with backdoor-adjusted features.

Each episode refits every step backwards: the regression pools the online
samples (feature psi(s, a)) with the offline samples (feature phi(s, a, u)),
targets are r + V_{h+1}(s') under the current episode's value estimate, and
the point estimate gets an information-gain bonus before truncation. The
offline samples enter Lambda before the first episode.

Comparison arms share the same loop: ``online_only`` drops the offline pool,
``naive_confounded`` feeds offline samples with the unadjusted psi(s, a)
feature so the confounded conditional is fitted instead of the causal effect.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import OfflineDataset
from .features import FeatureMap, build_backdoor_features
from .mdp import (BACKDOOR, ConfoundedMDP, ModeError, Trajectory, causal_kernel, causal_rewards,
                  evaluate_policy, optimal_values, sample_online_step)
from .report import OptimismAudit, RegretReport
from .ridge import AlgoConfig, RidgeState, normalized_info_gain
from .rng import draw, make_rng

BACKDOOR_MODES = ("dovi", "online_only", "naive_confounded")


@dataclass
class ValueIterate:
    k: int
    omega: np.ndarray     # (H, d)
    point: np.ndarray     # (H, S, A) psi^T omega
    bonus: np.ndarray     # (H, S, A)
    q: np.ndarray         # (H, S, A), truncated
    v: np.ndarray         # (H + 1, S)
    policy: np.ndarray    # (H, S)


def greedy(q: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties resolve to the lowest action index."""
    return np.argmax(q, axis=-1)


def offline_design(fm: FeatureMap, data: OfflineDataset, mode: str, h: int):
    """(features, rewards, next states) contributed by the offline data at step h."""
    s, a, u = data.states[:, h], data.actions[:, h], data.aux[:, h]
    X = fm.psi[h, s, a] if mode == "naive_confounded" else fm.phi[h, s, a, u]
    return X, data.rewards[:, h], data.states[:, h + 1]


def init_ridges(fm: FeatureMap, data: OfflineDataset | None, cfg: AlgoConfig, horizon: int) -> list[RidgeState]:
    ridges = []
    for h in range(horizon):
        st = RidgeState(fm.d, cfg.lam)
        if data is not None and data.n and cfg.mode != "online_only":
            X, r, nxt = offline_design(fm, data, cfg.mode, h)
            st.add_features(X, r, nxt, pool="offline")
        ridges.append(st)
    return ridges


def dovi_fit_episode(k: int, ridges: list[RidgeState], fm: FeatureMap, cfg: AlgoConfig, beta: float) -> ValueIterate:
    H = len(ridges)
    _, S, A, d = fm.psi.shape
    if any(st.d != d for st in ridges):
        raise ValueError(f"ridge dimension does not match feature dimension {d}")
    omega = np.zeros((H, d))
    point = np.zeros((H, S, A))
    bonus = np.zeros((H, S, A))
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        st = ridges[h]
        omega[h] = st.solve(st.rewards + v[h + 1][st.next_index])
        X = fm.psi[h].reshape(S * A, d)
        point[h] = (X @ omega[h]).reshape(S, A)
        bonus[h] = st.bonus(X, beta).reshape(S, A)
        q[h] = np.clip(point[h] + bonus[h], 0.0, cfg.cap(h, H))
        pi[h] = greedy(q[h])
        v[h] = q[h][np.arange(S), pi[h]]
    return ValueIterate(k, omega, point, bonus, q, v, pi)


def dovi_rollout(mdp: ConfoundedMDP, vi: ValueIterate, fm: FeatureMap, ridges: list[RidgeState],
                 rng: np.random.Generator, s1: int) -> Trajectory:
    """Play the greedy policy for one episode and append (psi, r, s') to the online pools."""
    H = mdp.horizon
    states = np.zeros(H + 1, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H)
    states[0] = s1
    for h in range(H):
        s = int(states[h])
        a = int(vi.policy[h, s])
        r, s_next, _ = sample_online_step(mdp, h, s, a, rng)
        ridges[h].add_feature(fm.psi[h, s, a], r, s_next, pool="online")
        states[h + 1], actions[h], rewards[h] = s_next, a, r
    return Trajectory("online", states, actions, rewards, episode=vi.k)


def prediction_error(q: np.ndarray, v: np.ndarray, P: np.ndarray, R: np.ndarray) -> np.ndarray:
    """-Q^k_h + R_h + P_h V^k_{h+1} for every (h, s, a)."""
    return -q + R + np.einsum("hsat,ht->hsa", P, v[1:])


def initial_state(mdp: ConfoundedMDP, cfg: AlgoConfig, k: int, rng: np.random.Generator) -> int:
    if cfg.initial_states:
        return int(cfg.initial_states[k % len(cfg.initial_states)])
    return draw(mdp.init, rng)


def run_dovi(mdp: ConfoundedMDP, data: OfflineDataset | None, cfg: AlgoConfig,
             fm: FeatureMap | None = None) -> RegretReport:
    if mdp.mode != BACKDOOR:
        raise ModeError(f"DOVI needs a backdoor-mode instance, {mdp.name!r} is {mdp.mode}-mode")
    if cfg.mode not in BACKDOOR_MODES:
        raise ModeError(f"mode {cfg.mode!r} is not a backdoor learner; expected one of {BACKDOOR_MODES}")
    if data is not None and data.n and data.mode != BACKDOOR:
        raise ModeError(f"offline data were drawn in {data.mode} mode")
    tic = time.perf_counter()
    fm = fm or build_backdoor_features(mdp)
    H, S, K, d = mdp.horizon, mdp.n_states, cfg.K, fm.d
    n = 0 if data is None or cfg.mode == "online_only" else data.n
    beta = cfg.beta_for(d, H, n)
    P, R = causal_kernel(mdp), causal_rewards(mdp)
    v_star = optimal_values(mdp).v

    ridges = init_ridges(fm, data, cfg, H)
    start = np.array([st.logdet for st in ridges])
    rng = make_rng(cfg.seed)
    audit = OptimismAudit()
    regret = np.zeros(K)
    starts = np.zeros(K, dtype=np.int64)
    delta = np.zeros(K)
    stream = np.zeros((H, K, d))
    for k in range(K):
        vi = dovi_fit_episode(k, ridges, fm, cfg, beta)
        if cfg.audit:
            audit.update(prediction_error(vi.q, vi.v, P, R), vi.bonus)
        s1 = initial_state(mdp, cfg, k, rng)
        v_pi = evaluate_policy(mdp, vi.policy, kernel=P, rewards=R)
        regret[k] = v_star[0, s1] - v_pi[0, s1]
        starts[k] = s1
        traj = dovi_rollout(mdp, vi, fm, ridges, rng, s1)
        for h in range(H):
            stream[h, k] = fm.psi[h, traj.states[h], traj.actions[h]]
        delta[k] = normalized_info_gain([st.logdet for st in ridges] - start, d, H)
    return RegretReport(
        instance=mdp.name, mode=cfg.mode, n=n, seed=cfg.seed, K=K, horizon=H, dims=(d,), beta=beta,
        lam=cfg.lam, beta_scale=cfg.beta_scale, zeta=cfg.zeta, value_cap=cfg.value_cap,
        regret=regret, initial_states=starts, delta_trace={"delta_h": delta},
        audits={"q": audit} if cfg.audit else {}, online_features={"psi": stream},
        wall_clock=time.perf_counter() - tic)


def run_baseline(mdp: ConfoundedMDP, data: OfflineDataset | None, cfg: AlgoConfig,
                 fm: FeatureMap | None = None) -> RegretReport:
    if cfg.mode not in ("online_only", "naive_confounded"):
        raise ValueError(f"baseline mode must be online_only or naive_confounded, got {cfg.mode!r}")
    return run_dovi(mdp, data, cfg, fm)


def replay_delta(online_features: np.ndarray, offline_features: list[np.ndarray], lam: float) -> float:
    """Normalized information gain of a fixed online stream on top of a given offline design.

    ``online_features`` is (H, K, d); ``offline_features[h]`` is (n_h, d).
    """
    H, _, d = online_features.shape
    gains = []
    for h in range(H):
        X = offline_features[h]
        base = lam * np.eye(d) + X.T @ X
        end = base + online_features[h].T @ online_features[h]
        gains.append(np.linalg.slogdet(end)[1] - np.linalg.slogdet(base)[1])
    return normalized_info_gain(gains, d, H)
