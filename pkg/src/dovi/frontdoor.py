"""Two-stage optimistic value iteration through a mediator (frontdoor setting).

Stage 1 regresses V_{h+1}(s') on the mediator-level features: offline samples
carry the behavior-weighted feature phi(s, a, m), online samples carry
psi(s, m). Its optimistic output is the half-step value V_{h+1/2}(s, m).
Stage 2 regresses r + V_{h+1/2}(s, m) on the one-hot gamma(s, a); offline and
online samples share that feature and differ only in their provenance tag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import OfflineDataset
from .features import FeatureMap, build_frontdoor_features
from .backdoor import greedy, initial_state
from .mdp import (FRONTDOOR, ConfoundedMDP, ModeError, Trajectory, causal_kernel, causal_rewards, do_mid_kernel,
                  evaluate_policy, optimal_values, sample_online_step)
from .report import OptimismAudit, RegretReport
from .ridge import AlgoConfig, RidgeState, normalized_info_gain
from .rng import make_rng


@dataclass
class ValueIteratePlus:
    k: int
    omega1: np.ndarray    # (H, d1)
    omega2: np.ndarray    # (H, d2)
    bonus_half: np.ndarray   # (H, S, M)
    v_half: np.ndarray    # (H, S, M), truncated
    bonus: np.ndarray     # (H, S, A)
    q: np.ndarray         # (H, S, A), truncated
    v: np.ndarray         # (H + 1, S)
    policy: np.ndarray    # (H, S)


def init_ridges_plus(fm: FeatureMap, data: OfflineDataset | None, cfg: AlgoConfig, horizon: int, n_mid: int):
    """Stage-1 and stage-2 ridge states with the offline pools already loaded."""
    stage1, stage2 = [], []
    use = data is not None and data.n and cfg.mode != "online_only"
    for h in range(horizon):
        st1, st2 = RidgeState(fm.d, cfg.lam), RidgeState(fm.d2, cfg.lam)
        if use:
            s, a, m = data.states[:, h], data.actions[:, h], data.aux[:, h]
            st1.add_features(fm.phi[h, s, a, m], None, data.states[:, h + 1], pool="offline")
            st2.add_features(fm.gamma[h, s, a], data.rewards[:, h], s * n_mid + m, pool="offline")
        stage1.append(st1)
        stage2.append(st2)
    return stage1, stage2


def dovi_plus_fit_episode(k: int, stage1: list[RidgeState], stage2: list[RidgeState], fm: FeatureMap,
                          cfg: AlgoConfig, beta1: float, beta2: float) -> ValueIteratePlus:
    if fm.gamma is None:
        raise ModeError("frontdoor learner needs gamma / mubar features")
    H = len(stage1)
    _, S, Mm, d1 = fm.psi.shape
    A, d2 = fm.gamma.shape[2], fm.d2
    if any(st.d != d1 for st in stage1) or any(st.d != d2 for st in stage2):
        raise ValueError(f"ridge dimensions do not match feature dimensions ({d1}, {d2})")
    omega1, omega2 = np.zeros((H, d1)), np.zeros((H, d2))
    bonus_half, v_half = np.zeros((H, S, Mm)), np.zeros((H, S, Mm))
    bonus, q = np.zeros((H, S, A)), np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        st1 = stage1[h]
        omega1[h] = st1.solve(v[h + 1][st1.next_index])
        X1 = fm.psi[h].reshape(S * Mm, d1)
        bonus_half[h] = st1.bonus(X1, beta1).reshape(S, Mm)
        v_half[h] = np.clip((X1 @ omega1[h]).reshape(S, Mm) + bonus_half[h], 0.0, cfg.half_cap(h, H))

        st2 = stage2[h]
        omega2[h] = st2.solve(st2.rewards + v_half[h].ravel()[st2.next_index])
        X2 = fm.gamma[h].reshape(S * A, d2)
        bonus[h] = st2.bonus(X2, beta2).reshape(S, A)
        q[h] = np.clip((X2 @ omega2[h]).reshape(S, A) + bonus[h], 0.0, cfg.cap(h, H))
        pi[h] = greedy(q[h])
        v[h] = q[h][np.arange(S), pi[h]]
    return ValueIteratePlus(k, omega1, omega2, bonus_half, v_half, bonus, q, v, pi)


def dovi_plus_rollout(mdp: ConfoundedMDP, vi: ValueIteratePlus, fm: FeatureMap, stage1: list[RidgeState],
                      stage2: list[RidgeState], rng: np.random.Generator, s1: int) -> Trajectory:
    H, Mm = mdp.horizon, mdp.n_mid
    states = np.zeros(H + 1, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H)
    mids = np.zeros(H, dtype=np.int64)
    states[0] = s1
    for h in range(H):
        s = int(states[h])
        a = int(vi.policy[h, s])
        r, s_next, m = sample_online_step(mdp, h, s, a, rng)
        stage1[h].add_feature(fm.psi[h, s, m], 0.0, s_next, pool="online")
        stage2[h].add_feature(fm.gamma[h, s, a], r, s * Mm + m, pool="online")
        states[h + 1], actions[h], rewards[h], mids[h] = s_next, a, r, m
    return Trajectory("online", states, actions, rewards, mids=mids, episode=vi.k)


def prediction_errors_plus(vi: ValueIteratePlus, mdp: ConfoundedMDP, mid_kernel: np.ndarray):
    """(iota_h over (s, a), iota_{h+1/2} over (s, m)) against the true tables."""
    iota = -vi.q + mdp.freward + np.einsum("hsam,hsm->hsa", mdp.itrans, vi.v_half)
    iota_half = -vi.v_half + np.einsum("hsmt,ht->hsm", mid_kernel, vi.v[1:])
    return iota, iota_half


def run_dovi_plus(mdp: ConfoundedMDP, data: OfflineDataset | None, cfg: AlgoConfig,
                  fm: FeatureMap | None = None) -> RegretReport:
    if mdp.mode != FRONTDOOR:
        raise ModeError(f"DOVI+ needs a frontdoor-mode instance, {mdp.name!r} is {mdp.mode}-mode")
    if cfg.mode not in ("dovi_plus", "online_only"):
        raise ModeError(f"mode {cfg.mode!r} is not a frontdoor learner; expected dovi_plus or online_only")
    if data is not None and data.n and data.mode != FRONTDOOR:
        raise ModeError(f"offline data were drawn in {data.mode} mode")
    tic = time.perf_counter()
    fm = fm or build_frontdoor_features(mdp)
    H, K, Mm = mdp.horizon, cfg.K, mdp.n_mid
    d1, d2 = fm.d, fm.d2
    n = 0 if data is None or cfg.mode == "online_only" else data.n
    beta1, beta2 = cfg.beta_for(d1, H, n), cfg.beta_for(d2, H, n)
    P, R = causal_kernel(mdp), causal_rewards(mdp)
    mid_kernel = do_mid_kernel(mdp)
    v_star = optimal_values(mdp).v

    stage1, stage2 = init_ridges_plus(fm, data, cfg, H, Mm)
    start1 = np.array([st.logdet for st in stage1])
    start2 = np.array([st.logdet for st in stage2])
    rng = make_rng(cfg.seed)
    audit_q, audit_half = OptimismAudit(), OptimismAudit()
    regret = np.zeros(K)
    starts = np.zeros(K, dtype=np.int64)
    delta1, delta2 = np.zeros(K), np.zeros(K)
    psi_stream, gamma_stream = np.zeros((H, K, d1)), np.zeros((H, K, d2))
    for k in range(K):
        vi = dovi_plus_fit_episode(k, stage1, stage2, fm, cfg, beta1, beta2)
        if cfg.audit:
            iota, iota_half = prediction_errors_plus(vi, mdp, mid_kernel)
            audit_q.update(iota, vi.bonus)
            audit_half.update(iota_half, vi.bonus_half)
        s1 = initial_state(mdp, cfg, k, rng)
        v_pi = evaluate_policy(mdp, vi.policy, kernel=P, rewards=R)
        regret[k] = v_star[0, s1] - v_pi[0, s1]
        starts[k] = s1
        traj = dovi_plus_rollout(mdp, vi, fm, stage1, stage2, rng, s1)
        for h in range(H):
            s, a, m = traj.states[h], traj.actions[h], traj.mids[h]
            psi_stream[h, k] = fm.psi[h, s, m]
            gamma_stream[h, k] = fm.gamma[h, s, a]
        delta1[k] = normalized_info_gain([st.logdet for st in stage1] - start1, d1, H)
        delta2[k] = normalized_info_gain([st.logdet for st in stage2] - start2, d2, H)
    return RegretReport(
        instance=mdp.name, mode=cfg.mode, n=n, seed=cfg.seed, K=K, horizon=H, dims=(d1, d2), beta=beta2,
        lam=cfg.lam, beta_scale=cfg.beta_scale, zeta=cfg.zeta, value_cap=cfg.value_cap,
        regret=regret, initial_states=starts, delta_trace={"delta1": delta1, "delta2": delta2},
        audits={"q": audit_q, "half": audit_half} if cfg.audit else {},
        online_features={"psi": psi_stream, "gamma": gamma_stream},
        wall_clock=time.perf_counter() - tic)
