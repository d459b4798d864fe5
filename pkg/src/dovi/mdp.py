"""Tabular confounded MDP: structural tables, exact causal quantities, samplers.

Index conventions (all zero-based, step ``h`` runs over ``0..H-1``)::

    trans[h, s, a, w, s']     P_h(s' | s, a, w)          backdoor variant
    reward[h, s, a, w]        r_h(s, a, w) in [0, 1]     backdoor variant
    conf[h, s, w]             P~_h(w | s)
    behavior[h, s, w, a]      nu_h(a | s, w)             offline behavior policy
    itrans[h, s, a, m]        P_h(m | s, a)              frontdoor variant
    ftrans[h, s, m, w, s']    P_h(s' | s, m, w)          frontdoor variant
    freward[h, s, a]          r_h(s, a) in [0, 1]        frontdoor variant
    obs_map[w]                observed coordinate u of confounder value w
    init[s]                   initial-state distribution

A policy is either an integer table ``pi[h, s]`` (deterministic) or a float
table ``pi[h, s, a]`` (stochastic). Policies never see ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .rng import draw

BACKDOOR = "backdoor"
FRONTDOOR = "frontdoor"

ROW_TOL = 1e-12


class ModeError(ValueError):
    """Operation requested for the wrong instance variant."""


class UnsupportedActionError(ValueError):
    """A conditional quantity was requested for an action the behavior policy never takes."""


def _frozen(x, dtype=float):
    if x is None:
        return None
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ConfoundedMDP:
    name: str
    horizon: int
    n_states: int
    n_actions: int
    n_conf: int
    obs_map: np.ndarray
    conf: np.ndarray
    behavior: np.ndarray
    init: np.ndarray
    trans: np.ndarray | None = None
    reward: np.ndarray | None = None
    n_mid: int = 0
    itrans: np.ndarray | None = None
    ftrans: np.ndarray | None = None
    freward: np.ndarray | None = None

    def __post_init__(self):
        for key in ("conf", "behavior", "init", "trans", "reward", "itrans", "ftrans", "freward"):
            object.__setattr__(self, key, _frozen(getattr(self, key)))
        object.__setattr__(self, "obs_map", _frozen(self.obs_map, dtype=np.int64))

    @property
    def mode(self) -> str:
        return FRONTDOOR if self.itrans is not None else BACKDOOR

    @property
    def n_obs(self) -> int:
        return int(self.obs_map.max()) + 1

    @property
    def shape(self) -> dict[str, int]:
        return dict(H=self.horizon, S=self.n_states, A=self.n_actions, W=self.n_conf,
                    U=self.n_obs, M=self.n_mid)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _check_rows(name, table, problems):
    sums = table.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_TOL)):
        where = "".join(f"[{i}]" for i in idx)
        problems.append(f"row sum {sums[idx]:.12g} at {name}{where}")
    for idx in zip(*np.nonzero(table < 0)):
        where = "".join(f"[{i}]" for i in idx)
        problems.append(f"negative probability {table[idx]:.12g} at {name}{where}")


def _check_shape(name, table, expected, problems) -> bool:
    if table is None:
        problems.append(f"missing table {name}")
        return False
    if table.shape != expected:
        problems.append(f"shape {table.shape} != {expected} for {name}")
        return False
    return True


def _check_reward(name, table, problems):
    bad = (table < 0) | (table > 1)
    for idx in zip(*np.nonzero(bad)):
        where = "".join(f"[{i}]" for i in idx)
        problems.append(f"reward {table[idx]:.12g} outside [0, 1] at {name}{where}")


def validate(mdp: ConfoundedMDP) -> list[str]:
    """Return human-readable invariant violations; empty iff the instance is well formed."""
    H, S, A, W = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_conf
    problems: list[str] = []
    if min(H, S, A, W) < 1:
        return [f"sizes must be positive: H={H} S={S} A={A} W={W}"]

    if mdp.obs_map.shape != (W,):
        problems.append(f"obs_map must map all {W} confounder values, got shape {mdp.obs_map.shape}")
    elif mdp.obs_map.min() < 0 or set(mdp.obs_map.tolist()) != set(range(mdp.n_obs)):
        problems.append(f"obs_map {mdp.obs_map.tolist()} is not onto 0..{mdp.n_obs - 1}")

    if _check_shape("init", mdp.init, (S,), problems):
        _check_rows("init", mdp.init[None, :], problems)
    if _check_shape("conf", mdp.conf, (H, S, W), problems):
        _check_rows("conf", mdp.conf, problems)
    if _check_shape("behavior", mdp.behavior, (H, S, W, A), problems):
        _check_rows("behavior", mdp.behavior, problems)

    backdoor_fields = mdp.trans is not None or mdp.reward is not None
    frontdoor_fields = any(t is not None for t in (mdp.itrans, mdp.ftrans, mdp.freward))
    if backdoor_fields and frontdoor_fields:
        problems.append("instance mixes backdoor (trans/reward) and frontdoor tables")
        return problems

    if mdp.mode == BACKDOOR:
        if _check_shape("trans", mdp.trans, (H, S, A, W, S), problems):
            _check_rows("trans", mdp.trans, problems)
        if _check_shape("reward", mdp.reward, (H, S, A, W), problems):
            _check_reward("reward", mdp.reward, problems)
        if not problems:
            problems.extend(_backdoor_criterion_violations(mdp))
    else:
        M = mdp.n_mid
        if M < 1:
            problems.append(f"n_mid must be positive in frontdoor mode, got {M}")
            return problems
        if _check_shape("itrans", mdp.itrans, (H, S, A, M), problems):
            _check_rows("itrans", mdp.itrans, problems)
        if _check_shape("ftrans", mdp.ftrans, (H, S, M, W, S), problems):
            _check_rows("ftrans", mdp.ftrans, problems)
        if _check_shape("freward", mdp.freward, (H, S, A), problems):
            _check_reward("freward", mdp.freward, problems)
    return problems


def _backdoor_criterion_violations(mdp: ConfoundedMDP, tol: float = 1e-12) -> list[str]:
    # When obs_map merges confounder values, u blocks the backdoor path only if the
    # observational u-conditional equals the interventional one wherever it is defined.
    if mdp.n_obs == mdp.n_conf:
        return []
    problems = []
    cond_p, cond_r, support = _u_conditionals(mdp)
    int_p, int_r = _u_interventionals(mdp)
    H, S, A, U = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_obs
    for h in range(H):
        for s in range(S):
            for a in range(A):
                for u in range(U):
                    if not support[h, s, a, u]:
                        continue
                    gap = max(np.abs(cond_p[h, s, a, u] - int_p[h, s, a, u]).max(),
                              abs(cond_r[h, s, a, u] - int_r[h, s, a, u]))
                    if gap > tol:
                        problems.append(
                            f"observed subset violates backdoor criterion at (h={h}, s={s}, a={a}, u={u}): "
                            f"conditional vs interventional gap {gap:.3g}")
    return problems


def require_valid(mdp: ConfoundedMDP) -> None:
    problems = validate(mdp)
    if problems:
        raise ValueError(f"invalid instance {mdp.name!r}: " + "; ".join(problems[:5]))


def _require_mode(mdp: ConfoundedMDP, mode: str) -> None:
    if mdp.mode != mode:
        raise ModeError(f"instance {mdp.name!r} is {mdp.mode}-mode, operation needs {mode}")


def _check_index(name: str, value: int, size: int) -> None:
    if not 0 <= value < size:
        raise IndexError(f"{name}={value} out of range [0, {size})")


# ---------------------------------------------------------------------------
# exact causal / conditional quantities
# ---------------------------------------------------------------------------


def causal_kernel(mdp: ConfoundedMDP) -> np.ndarray:
    """P(s' | s, do(a)) for every (h, s, a), shape (H, S, A, S), either mode."""
    if mdp.mode == BACKDOOR:
        return np.einsum("hsw,hsawt->hsat", mdp.conf, mdp.trans)
    return np.einsum("hsam,hsmt->hsat", mdp.itrans, do_mid_kernel(mdp))


def causal_rewards(mdp: ConfoundedMDP) -> np.ndarray:
    """E[r | s, do(a)] for every (h, s, a), shape (H, S, A), either mode."""
    if mdp.mode == BACKDOOR:
        return np.einsum("hsw,hsaw->hsa", mdp.conf, mdp.reward)
    return np.array(mdp.freward)


def causal_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int) -> np.ndarray:
    _require_mode(mdp, BACKDOOR)
    return mdp.conf[h, s] @ mdp.trans[h, s, a]


def causal_reward(mdp: ConfoundedMDP, h: int, s: int, a: int) -> float:
    _require_mode(mdp, BACKDOOR)
    return float(mdp.conf[h, s] @ mdp.reward[h, s, a])


def _action_weights(mdp: ConfoundedMDP, h: int, s: int, a: int) -> np.ndarray:
    weights = mdp.conf[h, s] * mdp.behavior[h, s, :, a]
    if weights.sum() <= 0:
        raise UnsupportedActionError(
            f"action {a} has zero probability under the behavior policy at (h={h}, s={s}); "
            "the observational conditional is undefined")
    return weights


def conditional_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int) -> np.ndarray:
    """Confounded observational P(s' | s, a) as produced by the behavior policy."""
    _require_mode(mdp, BACKDOOR)
    weights = _action_weights(mdp, h, s, a)
    return weights @ mdp.trans[h, s, a] / weights.sum()


def conditional_reward(mdp: ConfoundedMDP, h: int, s: int, a: int) -> float:
    _require_mode(mdp, BACKDOOR)
    weights = _action_weights(mdp, h, s, a)
    return float(weights @ mdp.reward[h, s, a] / weights.sum())


def obs_conf_dist(mdp: ConfoundedMDP, h: int, s: int) -> np.ndarray:
    """P(u | s): the confounder law pushed through obs_map."""
    return np.bincount(mdp.obs_map, weights=mdp.conf[h, s], minlength=mdp.n_obs)


def _u_conditionals(mdp: ConfoundedMDP):
    # Bayes over w restricted to each u-class: weights P~(w|s) nu(a|s,w) 1{obs(w)=u}.
    H, S, A, U = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_obs
    onehot = np.eye(U)[mdp.obs_map]                                   # (W, U)
    weights = np.einsum("hsw,hswa,wu->hsauw", mdp.conf, mdp.behavior, onehot)
    mass = weights.sum(axis=-1)
    support = mass > 0
    safe = np.where(support, mass, 1.0)
    p = np.einsum("hsauw,hsawt->hsaut", weights, mdp.trans) / safe[..., None]
    r = np.einsum("hsauw,hsaw->hsau", weights, mdp.reward) / safe
    return p, r, support


def _u_interventionals(mdp: ConfoundedMDP):
    # E over w ~ P~(w | s, u) without the behavior factor; defined whenever P(u|s) > 0,
    # otherwise falls back to a uniform average over the u-class.
    U = mdp.n_obs
    onehot = np.eye(U)[mdp.obs_map]
    weights = np.einsum("hsw,wu->hsuw", mdp.conf, onehot)
    mass = weights.sum(axis=-1)
    uniform = np.broadcast_to(onehot.T / onehot.sum(axis=0)[:, None], weights.shape)
    weights = np.where(mass[..., None] > 0, weights / np.where(mass > 0, mass, 1.0)[..., None], uniform)
    p = np.einsum("hsuw,hsawt->hsaut", weights, mdp.trans)
    r = np.einsum("hsuw,hsaw->hsau", weights, mdp.reward)
    return p, r


def u_conditional_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int, u: int) -> np.ndarray:
    """Observational P(s' | s, a, u) by exact Bayes over the confounder values mapped to u."""
    _require_mode(mdp, BACKDOOR)
    weights = mdp.conf[h, s] * mdp.behavior[h, s, :, a] * (mdp.obs_map == u)
    if weights.sum() <= 0:
        raise UnsupportedActionError(f"(s={s}, a={a}, u={u}) has zero observational probability at h={h}")
    return weights @ mdp.trans[h, s, a] / weights.sum()


def u_conditional_reward(mdp: ConfoundedMDP, h: int, s: int, a: int, u: int) -> float:
    _require_mode(mdp, BACKDOOR)
    weights = mdp.conf[h, s] * mdp.behavior[h, s, :, a] * (mdp.obs_map == u)
    if weights.sum() <= 0:
        raise UnsupportedActionError(f"(s={s}, a={a}, u={u}) has zero observational probability at h={h}")
    return float(weights @ mdp.reward[h, s, a] / weights.sum())


def adjusted_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int) -> np.ndarray:
    """Backdoor adjustment: sum_u P(u|s) P(s'|s,a,u), using only observable-level quantities."""
    pu = obs_conf_dist(mdp, h, s)
    out = np.zeros(mdp.n_states)
    for u in np.nonzero(pu)[0]:
        out += pu[u] * u_conditional_next_dist(mdp, h, s, a, int(u))
    return out


def adjusted_reward(mdp: ConfoundedMDP, h: int, s: int, a: int) -> float:
    pu = obs_conf_dist(mdp, h, s)
    return float(sum(pu[u] * u_conditional_reward(mdp, h, s, a, int(u)) for u in np.nonzero(pu)[0]))


# frontdoor ------------------------------------------------------------------


def marginal_behavior(mdp: ConfoundedMDP, h: int, s: int) -> np.ndarray:
    """nu~(a | s) = E_w[nu(a | s, w)]."""
    return mdp.conf[h, s] @ mdp.behavior[h, s]


def do_mid_kernel(mdp: ConfoundedMDP) -> np.ndarray:
    """P(s' | s, do(m)) for every (h, s, m), shape (H, S, M, S)."""
    _require_mode(mdp, FRONTDOOR)
    return np.einsum("hsw,hsmwt->hsmt", mdp.conf, mdp.ftrans)


def do_mid_next_dist(mdp: ConfoundedMDP, h: int, s: int, m: int) -> np.ndarray:
    _require_mode(mdp, FRONTDOOR)
    return mdp.conf[h, s] @ mdp.ftrans[h, s, m]


def frontdoor_conditional_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int, m: int) -> np.ndarray:
    """Observational P(s' | s, a, m); m carries no information about w beyond a."""
    _require_mode(mdp, FRONTDOOR)
    weights = _action_weights(mdp, h, s, a)
    return weights @ mdp.ftrans[h, s, m] / weights.sum()


def frontdoor_next_dist(mdp: ConfoundedMDP, h: int, s: int, a: int, route: str = "direct") -> np.ndarray:
    """P(s' | s, do(a)) in frontdoor mode.

    ``route="direct"`` marginalizes the hidden confounder with the true tables;
    ``route="adjusted"`` uses only observational quantities: the mediator law
    P(m|s,a) and the behavior-weighted conditional P(s'|s,a',m).
    """
    _require_mode(mdp, FRONTDOOR)
    nu = marginal_behavior(mdp, h, s)
    if np.any(nu <= 0):
        raise UnsupportedActionError(
            f"frontdoor adjustment needs full behavior support at (h={h}, s={s}); marginal {nu.tolist()}")
    if route == "direct":
        return mdp.itrans[h, s, a] @ (mdp.conf[h, s] @ mdp.ftrans[h, s])
    if route == "adjusted":
        out = np.zeros(mdp.n_states)
        for m in range(mdp.n_mid):
            inner = sum(nu[b] * frontdoor_conditional_next_dist(mdp, h, s, b, m) for b in range(mdp.n_actions))
            out += mdp.itrans[h, s, a, m] * inner
        return out
    raise ValueError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# dynamic programming
# ---------------------------------------------------------------------------


class OptimalValues(NamedTuple):
    q: np.ndarray       # (H, S, A)
    v: np.ndarray       # (H + 1, S), v[H] = 0
    policy: np.ndarray  # (H, S) int


def optimal_values(mdp: ConfoundedMDP) -> OptimalValues:
    """Backward induction on the interventional dynamics; ties go to the lowest action."""
    H, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    P, R = causal_kernel(mdp), causal_rewards(mdp)
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q[h] = R[h] + P[h] @ v[h + 1]
        pi[h] = np.argmax(q[h], axis=1)
        v[h] = q[h][np.arange(S), pi[h]]
    return OptimalValues(q, v, pi)


def half_step_values(mdp: ConfoundedMDP, v: np.ndarray) -> np.ndarray:
    """V_{h+1/2}(s, m) = E[V_{h+1}(s') | s, do(m)], shape (H, S, M)."""
    return np.einsum("hsmt,ht->hsm", do_mid_kernel(mdp), v[1:])


def as_stochastic(policy: np.ndarray, n_actions: int) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.ndim == 2:
        if policy.min() < 0 or policy.max() >= n_actions:
            raise IndexError(f"policy actions must lie in [0, {n_actions})")
        return np.eye(n_actions)[policy]
    return policy.astype(float)


def evaluate_policy(mdp: ConfoundedMDP, policy: np.ndarray, kernel: np.ndarray | None = None,
                    rewards: np.ndarray | None = None) -> np.ndarray:
    """Exact V^pi as an (H + 1, S) table with V^pi_{H} = 0 (zero-based steps).

    ``kernel`` / ``rewards`` may pass precomputed interventional tables.
    """
    H, S = mdp.horizon, mdp.n_states
    pi = as_stochastic(policy, mdp.n_actions)
    P = causal_kernel(mdp) if kernel is None else kernel
    R = causal_rewards(mdp) if rewards is None else rewards
    v = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        v[h] = np.einsum("sa,sa->s", pi[h], R[h] + P[h] @ v[h + 1])
    return v


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """One episode. ``states`` has H + 1 entries; ``obs`` / ``mids`` depend on the mode."""

    kind: str                      # offline-backdoor | offline-frontdoor | online
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    obs: np.ndarray | None = None
    mids: np.ndarray | None = None
    episode: int = 0
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.actions)


def sample_offline_episode(mdp: ConfoundedMDP, mode: str, rng: np.random.Generator,
                           s1: int | None = None, episode: int = 0, seed: int | None = None) -> Trajectory:
    """Roll out the behavior policy in the confounded SCM; the confounder itself is never recorded."""
    _require_mode(mdp, mode)
    H = mdp.horizon
    states = np.zeros(H + 1, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H)
    aux = np.zeros(H, dtype=np.int64)
    states[0] = draw(mdp.init, rng) if s1 is None else s1
    for h in range(H):
        s = states[h]
        w = draw(mdp.conf[h, s], rng)
        a = draw(mdp.behavior[h, s, w], rng)
        actions[h] = a
        if mode == BACKDOOR:
            rewards[h] = mdp.reward[h, s, a, w]
            aux[h] = mdp.obs_map[w]
            states[h + 1] = draw(mdp.trans[h, s, a, w], rng)
        else:
            rewards[h] = mdp.freward[h, s, a]
            m = draw(mdp.itrans[h, s, a], rng)
            aux[h] = m
            states[h + 1] = draw(mdp.ftrans[h, s, m, w], rng)
    if mode == BACKDOOR:
        return Trajectory("offline-backdoor", states, actions, rewards, obs=aux, episode=episode, seed=seed)
    return Trajectory("offline-frontdoor", states, actions, rewards, mids=aux, episode=episode, seed=seed)


def sample_online_step(mdp: ConfoundedMDP, h: int, s: int, a: int,
                       rng: np.random.Generator) -> tuple[float, int, int | None]:
    """Play do(a) at (h, s); returns (reward, next state, mediator or None)."""
    _check_index("h", h, mdp.horizon)
    _check_index("s", s, mdp.n_states)
    _check_index("a", a, mdp.n_actions)
    w = draw(mdp.conf[h, s], rng)
    if mdp.mode == BACKDOOR:
        return float(mdp.reward[h, s, a, w]), draw(mdp.trans[h, s, a, w], rng), None
    m = draw(mdp.itrans[h, s, a], rng)
    return float(mdp.freward[h, s, a]), draw(mdp.ftrans[h, s, m, w], rng), m
