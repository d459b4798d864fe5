"""Exact linear embeddings of tabular confounded MDPs.

Backdoor mode uses a one-hot feature over (s, a, u) so that the observed-kernel,
adjusted-kernel and reward identities hold with equality; the adjusted online
feature is the P(u | s) mixture of those one-hots.

Frontdoor mode uses two spaces. Stage 1 is one-hot over (s, m, w) (the
confounder only enters through expectations, so the learner never sees it);
the offline feature is the behavior-weighted mixture and the online feature
is the plain P~(w | s) mixture. Stage 2 is one-hot over (s, a).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mdp as M
from .mdp import BACKDOOR, FRONTDOOR, ConfoundedMDP
from .textio import write_dump


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature tables indexed like the instance tables, feature dimension last.

    backdoor:  phi[h,s,a,u], psi[h,s,a], mu[h,s'], theta[h]           (dim d)
    frontdoor: rho[h,s,m,w], phi[h,s,a,m], psi[h,s,m], mu[h,s'],
               theta[h] (dim d2), gamma[h,s,a], mubar[h,m]            (dims d, d2)
    """

    mode: str
    d: int
    phi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    rho: np.ndarray | None = None
    gamma: np.ndarray | None = None
    mubar: np.ndarray | None = None
    d2: int = 0

    def __post_init__(self):
        for key in ("phi", "psi", "mu", "theta", "rho", "gamma", "mubar"):
            arr = getattr(self, key)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, key, arr)

    def arrays(self) -> dict[str, np.ndarray]:
        keys = ("phi", "psi", "mu", "theta", "rho", "gamma", "mubar")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}


def build_backdoor_features(mdp: ConfoundedMDP) -> FeatureMap:
    if mdp.mode != BACKDOOR:
        raise M.ModeError(f"instance {mdp.name!r} is frontdoor-mode; backdoor features need trans/reward")
    H, S, A, U = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_obs
    d = S * A * U
    eye = np.eye(d).reshape(S, A, U, d)
    phi = np.broadcast_to(eye, (H, S, A, U, d))
    pu = np.stack([[M.obs_conf_dist(mdp, h, s) for s in range(S)] for h in range(H)])   # (H, S, U)
    psi = np.einsum("hsu,saud->hsad", pu, eye)
    p_u, r_u = M._u_interventionals(mdp)                                            # (H,S,A,U,S'), (H,S,A,U)
    mu = p_u.reshape(H, d, S).transpose(0, 2, 1)
    theta = r_u.reshape(H, d)
    return FeatureMap(BACKDOOR, d, phi, psi, mu, theta)


def build_frontdoor_features(mdp: ConfoundedMDP) -> FeatureMap:
    if mdp.mode != FRONTDOOR:
        raise M.ModeError(f"instance {mdp.name!r} is backdoor-mode; frontdoor features need mediator tables")
    H, S, A, Mm, W = mdp.horizon, mdp.n_states, mdp.n_actions, mdp.n_mid, mdp.n_conf
    nu = np.einsum("hsw,hswa->hsa", mdp.conf, mdp.behavior)
    if np.any(nu <= 0):
        h, s, a = (int(i) for i in np.argwhere(nu <= 0)[0])
        raise M.UnsupportedActionError(
            f"behavior never takes action {a} at (h={h}, s={s}); the frontdoor feature is undefined")
    d = S * Mm * W
    eye = np.eye(d).reshape(S, Mm, W, d)
    rho = np.broadcast_to(eye, (H, S, Mm, W, d))
    weights = np.einsum("hsw,hswa->hsaw", mdp.conf, mdp.behavior) / nu[..., None]
    phi = np.einsum("hsaw,smwd->hsamd", weights, eye)
    psi = np.einsum("hsw,smwd->hsmd", mdp.conf, eye)
    mu = mdp.ftrans.reshape(H, d, S).transpose(0, 2, 1)
    d2 = S * A
    gamma = np.broadcast_to(np.eye(d2).reshape(S, A, d2), (H, S, A, d2))
    mubar = mdp.itrans.reshape(H, d2, Mm).transpose(0, 2, 1)
    theta = mdp.freward.reshape(H, d2)
    return FeatureMap(FRONTDOOR, d, phi, psi, mu, theta, rho=rho, gamma=gamma, mubar=mubar, d2=d2)


def build_features(mdp: ConfoundedMDP) -> FeatureMap:
    return build_backdoor_features(mdp) if mdp.mode == BACKDOOR else build_frontdoor_features(mdp)


def dump_features(fm: FeatureMap, path) -> None:
    write_dump(path, fm.arrays())


# ---------------------------------------------------------------------------
# realizability audit
# ---------------------------------------------------------------------------


@dataclass
class RealizabilityReport:
    residuals: dict[str, float] = field(default_factory=dict)
    worst: dict[str, tuple] = field(default_factory=dict)
    norm_violations: list[str] = field(default_factory=list)

    def record(self, name: str, got: np.ndarray, want: np.ndarray, mask: np.ndarray | None = None):
        err = np.abs(np.asarray(got) - np.asarray(want))
        if mask is not None:
            err = np.where(mask, err, 0.0)
        idx = np.unravel_index(int(np.argmax(err)), err.shape) if err.size else ()
        self.residuals[name] = float(err.max()) if err.size else 0.0
        self.worst[name] = tuple(int(i) for i in idx)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def violations(self, tol: float = 1e-12) -> list[str]:
        return [f"{name}: residual {res:.3g} at index {self.worst[name]}"
                for name, res in self.residuals.items() if res > tol]

    def ok(self, tol: float = 1e-12) -> bool:
        return not self.violations(tol)


def _norm_checks(report: RealizabilityReport, fm: FeatureMap, tol: float = 1e-12) -> None:
    for key in ("phi", "psi", "rho", "gamma"):
        arr = getattr(fm, key)
        if arr is None:
            continue
        norms = np.linalg.norm(arr, axis=-1)
        if norms.max() > 1 + tol:
            idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(norms)), norms.shape))
            report.norm_violations.append(f"||{key}{list(idx)}||_2 = {norms.max():.6g} > 1")
    for key, dim in (("mu", fm.d), ("mubar", fm.d2)):
        arr = getattr(fm, key)
        if arr is None:
            continue
        # arr[h, x, i]: sum_i (sum_x |mu_i(x)|)^2 <= d
        mass = (np.abs(arr).sum(axis=1) ** 2).sum(axis=-1)
        for h in np.nonzero(mass > dim + tol)[0]:
            report.norm_violations.append(f"sum_i ||{key}_i||_1^2 = {mass[h]:.6g} > {dim} at h={h}")
    tdim = fm.d2 if fm.mode == FRONTDOOR else fm.d
    tn = np.linalg.norm(fm.theta, axis=-1)
    for h in np.nonzero(tn > np.sqrt(tdim) + tol)[0]:
        report.norm_violations.append(f"||theta[{h}]||_2 = {tn[h]:.6g} > sqrt({tdim})")


def check_realizability(mdp: ConfoundedMDP, fm: FeatureMap) -> RealizabilityReport:
    """Max absolute residual of every linearity identity, over all index tuples."""
    if mdp.mode != fm.mode:
        raise M.ModeError(f"instance is {mdp.mode}-mode but features are {fm.mode}-mode")
    report = RealizabilityReport()
    opt = M.optimal_values(mdp)
    if fm.mode == BACKDOOR:
        p_cond, r_cond, support = M._u_conditionals(mdp)
        report.record("kernel", np.einsum("hsaud,htd->hsaut", fm.phi, fm.mu), p_cond, support[..., None])
        report.record("reward", np.einsum("hsaud,hd->hsau", fm.phi, fm.theta), r_cond, support)
        report.record("causal_kernel", np.einsum("hsad,htd->hsat", fm.psi, fm.mu), M.causal_kernel(mdp))
        report.record("causal_reward", np.einsum("hsad,hd->hsa", fm.psi, fm.theta), M.causal_rewards(mdp))
        w_star = fm.theta + np.einsum("htd,ht->hd", fm.mu, opt.v[1:])
        report.record("q_star", np.einsum("hsad,hd->hsa", fm.psi, w_star), opt.q)
    else:
        H, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
        report.record("kernel_rho", np.einsum("hsmwd,htd->hsmwt", fm.rho, fm.mu), mdp.ftrans)
        bayes = np.stack([[[[M.frontdoor_conditional_next_dist(mdp, h, s, a, m)
                             for m in range(mdp.n_mid)] for a in range(A)] for s in range(S)] for h in range(H)])
        report.record("kernel", np.einsum("hsamd,htd->hsamt", fm.phi, fm.mu), bayes)
        report.record("do_mid_kernel", np.einsum("hsmd,htd->hsmt", fm.psi, fm.mu), M.do_mid_kernel(mdp))
        report.record("mediator", np.einsum("hsad,hmd->hsam", fm.gamma, fm.mubar), mdp.itrans)
        report.record("reward", np.einsum("hsad,hd->hsa", fm.gamma, fm.theta), mdp.freward)
        v_half = M.half_step_values(mdp, opt.v)
        w1 = np.einsum("htd,ht->hd", fm.mu, opt.v[1:])
        report.record("v_half_star", np.einsum("hsmd,hd->hsm", fm.psi, w1), v_half)
        # stage-2 weight: index (s, a) carries theta + sum_m mubar_m * V_half(s, m)
        owner = np.repeat(np.arange(S), A)
        w2 = fm.theta + np.einsum("hmd,hdm->hd", fm.mubar, v_half[:, owner, :])
        report.record("q_star", np.einsum("hsad,hd->hsa", fm.gamma, w2), opt.q)
    _norm_checks(report, fm)
    return report
