"""Fixed instances used by tests, sweeps and the CLI.

All tables are step-independent (the same table is repeated for every h) and
the initial distribution is uniform unless stated. Names:

TRAP-2        one-step bandit, r = 1 iff a = w; behavior copies w w.p. 0.9
TRAP-2-H2     two steps; the confounded conditional favors a risky action
              that leads to a low-paying trap state
BD-2          two states, two actions, binary confounder, H = 2
NOCONF-2      BD-2 with a behavior policy that ignores w
CH-2          two-step chain with confounded rewards (16 deterministic policies)
FD-2          frontdoor instance, mediator mostly copies the action
FD-DET        frontdoor instance with m = a exactly
FD-DET-BD     backdoor instance equivalent to FD-DET
CANON(d,H)    one state, d actions, no confounding; backdoor features are the
              standard basis of R^d
"""

from __future__ import annotations

import re

import numpy as np

from .mdp import ConfoundedMDP, require_valid

FIXED_NAMES = ("TRAP-2", "TRAP-2-H2", "BD-2", "NOCONF-2", "CH-2", "FD-2", "FD-DET", "FD-DET-BD")
_CANON = re.compile(r"^CANON\((\d+),(\d+)\)$")


class UnknownInstanceError(ValueError):
    pass


def _rep(table, H: int) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    return np.broadcast_to(table, (H,) + table.shape).copy()


def _binary(p_one) -> np.ndarray:
    """Stack (1 - p, p) along a new last axis."""
    p = np.asarray(p_one, dtype=float)
    return np.stack([1.0 - p, p], axis=-1)


def trap2() -> ConfoundedMDP:
    H = 1
    return ConfoundedMDP(
        name="TRAP-2", horizon=H, n_states=1, n_actions=2, n_conf=2, obs_map=np.arange(2),
        conf=_rep([[0.5, 0.5]], H),
        behavior=_rep([[[0.9, 0.1], [0.1, 0.9]]], H),
        init=np.ones(1),
        trans=np.ones((H, 1, 2, 2, 1)),
        reward=_rep([np.eye(2)], H))


def trap2_h2() -> ConfoundedMDP:
    H, S, A, W = 2, 2, 2, 2
    conf = _rep(_binary([0.3, 0.5]), H)
    # action 1 when w = 1 almost always, so E[r | a = 1] is inflated
    behavior = _rep([[[0.95, 0.05], [0.05, 0.95]], [[0.5, 0.5], [0.5, 0.5]]], H)
    trans = np.zeros((H, S, A, W, S))
    trans[:, 0, 0] = [0.9, 0.1]
    trans[:, 0, 1] = [0.1, 0.9]
    trans[:, 1, :] = [0.0, 1.0]
    reward = np.zeros((H, S, A, W))
    reward[0, 0, 0] = 0.6
    reward[1, 0, 0] = 0.5
    reward[:, 0, 1] = [0.0, 1.0]
    reward[:, 1] = 0.1
    return ConfoundedMDP(name="TRAP-2-H2", horizon=H, n_states=S, n_actions=A, n_conf=W,
                         obs_map=np.arange(W), conf=conf, behavior=behavior,
                         init=np.array([1.0, 0.0]), trans=trans, reward=reward)


def _bd2_tables():
    conf = _binary([0.5, 0.3])                                   # [s, w]
    behavior = 1.0 - _binary([[0.9, 0.1], [0.2, 0.7]])           # nu(a=0 | s, w) -> [s, w, a]
    trans = _binary([[[0.2, 0.8], [0.6, 0.3]],                   # P(s'=1 | s, a, w)
                     [[0.5, 0.9], [0.4, 0.1]]])
    reward = np.array([[[0.1, 0.5], [0.45, 0.35]],
                       [[0.6, 0.5], [0.4, 0.5]]])
    return conf, behavior, trans, reward


def bd2(name: str = "BD-2", confounded: bool = True) -> ConfoundedMDP:
    H = 2
    conf, behavior, trans, reward = _bd2_tables()
    if not confounded:
        behavior = np.broadcast_to(np.array([[0.6, 0.4]]), behavior.shape)
    return ConfoundedMDP(name=name, horizon=H, n_states=2, n_actions=2, n_conf=2, obs_map=np.arange(2),
                         conf=_rep(conf, H), behavior=_rep(behavior, H), init=np.full(2, 0.5),
                         trans=_rep(trans, H), reward=_rep(reward, H))


def ch2() -> ConfoundedMDP:
    H, S, A, W = 2, 2, 2, 2
    conf = _binary([0.4, 0.6])
    behavior = np.array([[[0.8, 0.2], [0.3, 0.7]], [[0.6, 0.4], [0.1, 0.9]]])
    # action 1 pushes right along the chain, action 0 drifts left
    trans = _binary([[[0.1, 0.3], [0.7, 0.9]],
                     [[0.2, 0.4], [0.8, 0.95]]])
    reward = np.array([[[0.2, 0.0], [0.0, 0.3]],
                       [[0.5, 0.7], [1.0, 0.6]]])
    return ConfoundedMDP(name="CH-2", horizon=H, n_states=S, n_actions=A, n_conf=W, obs_map=np.arange(W),
                         conf=_rep(conf, H), behavior=_rep(behavior, H), init=np.array([1.0, 0.0]),
                         trans=_rep(trans, H), reward=_rep(reward, H))


def fd2() -> ConfoundedMDP:
    H, S, A, Mm, W = 2, 2, 2, 2, 2
    conf = _binary([0.4, 0.6])
    behavior = np.array([[[0.85, 0.15], [0.2, 0.8]], [[0.7, 0.3], [0.25, 0.75]]])
    itrans = np.array([[[0.85, 0.15], [0.15, 0.85]], [[0.8, 0.2], [0.1, 0.9]]])
    ftrans = _binary([[[0.2, 0.7], [0.6, 0.9]],                  # P(s'=1 | s, m, w)
                      [[0.3, 0.5], [0.8, 0.4]]])
    freward = np.array([[0.2, 0.35], [0.6, 0.45]])
    return ConfoundedMDP(name="FD-2", horizon=H, n_states=S, n_actions=A, n_conf=W, obs_map=np.arange(W),
                         conf=_rep(conf, H), behavior=_rep(behavior, H), init=np.full(S, 0.5),
                         n_mid=Mm, itrans=_rep(itrans, H), ftrans=_rep(ftrans, H), freward=_rep(freward, H))


def _fd_det_tables():
    conf = _binary([0.5, 0.3])
    behavior = 1.0 - _binary([[0.8, 0.3], [0.25, 0.7]])
    ftrans = _binary([[[0.3, 0.7], [0.6, 0.2]],
                      [[0.5, 0.8], [0.2, 0.4]]])
    freward = np.array([[0.2, 0.4], [0.7, 0.3]])
    return conf, behavior, ftrans, freward


def fd_det() -> ConfoundedMDP:
    H, S, A = 2, 2, 2
    conf, behavior, ftrans, freward = _fd_det_tables()
    itrans = np.broadcast_to(np.eye(A), (S, A, A))
    return ConfoundedMDP(name="FD-DET", horizon=H, n_states=S, n_actions=A, n_conf=2, obs_map=np.arange(2),
                         conf=_rep(conf, H), behavior=_rep(behavior, H), init=np.full(S, 0.5),
                         n_mid=A, itrans=_rep(itrans, H), ftrans=_rep(ftrans, H), freward=_rep(freward, H))


def fd_det_backdoor() -> ConfoundedMDP:
    """Same interventional dynamics as FD-DET, written as a backdoor instance."""
    H, S, A = 2, 2, 2
    conf, behavior, ftrans, freward = _fd_det_tables()
    reward = np.broadcast_to(freward[:, :, None], (S, A, 2))
    return ConfoundedMDP(name="FD-DET-BD", horizon=H, n_states=S, n_actions=A, n_conf=2, obs_map=np.arange(2),
                         conf=_rep(conf, H), behavior=_rep(behavior, H), init=np.full(S, 0.5),
                         trans=_rep(ftrans, H), reward=_rep(reward, H))


def canon(d: int, H: int) -> ConfoundedMDP:
    if d < 1 or H < 1:
        raise UnknownInstanceError(f"CANON needs d >= 1 and H >= 1, got ({d}, {H})")
    reward = np.linspace(0.0, 1.0, d) if d > 1 else np.ones(1)
    return ConfoundedMDP(name=f"CANON({d},{H})", horizon=H, n_states=1, n_actions=d, n_conf=1,
                         obs_map=np.zeros(1), conf=_rep([[1.0]], H), behavior=_rep(np.full((1, 1, d), 1.0 / d), H),
                         init=np.ones(1), trans=np.ones((H, 1, d, 1, 1)), reward=_rep(reward[None, :, None], H))


_BUILDERS = {
    "TRAP-2": trap2,
    "TRAP-2-H2": trap2_h2,
    "BD-2": bd2,
    "NOCONF-2": lambda: bd2("NOCONF-2", confounded=False),
    "CH-2": ch2,
    "FD-2": fd2,
    "FD-DET": fd_det,
    "FD-DET-BD": fd_det_backdoor,
}


def gallery(name: str) -> ConfoundedMDP:
    key = name.replace(" ", "")
    match = _CANON.match(key)
    if match:
        mdp = canon(int(match.group(1)), int(match.group(2)))
    elif key in _BUILDERS:
        mdp = _BUILDERS[key]()
    else:
        raise UnknownInstanceError(f"unknown instance {name!r}; known: {', '.join(FIXED_NAMES)}, CANON(d,H)")
    require_valid(mdp)
    return mdp


def gallery_names() -> list[str]:
    return list(FIXED_NAMES) + ["CANON(4,2)"]
