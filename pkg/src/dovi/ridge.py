"""Regularized least-squares state shared by both learners.

``RidgeState`` keeps Lambda = lambda*I + sum x x^T together with its lower
Cholesky factor and log-determinant, both updated incrementally. Raw samples
(feature, reward, next index) are pooled instead of folded into a response
vector because regression targets depend on the current value estimate and
are rebuilt every episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

OFFLINE = 0
ONLINE = 1
_POOLS = {"offline": OFFLINE, "online": ONLINE}

MODES = ("dovi", "dovi_plus", "online_only", "naive_confounded")
VALUE_CAPS = ("remaining", "strict")


def chol_update(L: np.ndarray, x: np.ndarray) -> None:
    """In-place rank-1 update of a lower Cholesky factor: L L^T + x x^T."""
    x = np.array(x, dtype=float)
    nz = np.flatnonzero(x)
    if nz.size == 0:
        return
    n = x.size
    for k in range(int(nz[0]), n):
        xk = x[k]
        if xk == 0.0:
            continue
        lkk = L[k, k]
        r = math.hypot(lkk, xk)
        c = r / lkk
        s = xk / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]


class RidgeState:
    def __init__(self, d: int, lam: float = 1.0, refactor_every: int = 512):
        if d < 1 or lam <= 0:
            raise ValueError(f"need d >= 1 and lambda > 0, got d={d}, lambda={lam}")
        self.d = d
        self.lam = float(lam)
        self.refactor_every = refactor_every
        self.Lambda = self.lam * np.eye(d)
        self.chol = math.sqrt(self.lam) * np.eye(d)
        self.logdet = d * math.log(self.lam)
        self._since_refactor = 0
        self._x = np.zeros((16, d))
        self._r = np.zeros(16)
        self._next = np.zeros(16, dtype=np.int64)
        self._tag = np.zeros(16, dtype=np.int8)
        self.size = 0

    # pools -------------------------------------------------------------------

    def _grow(self, extra: int) -> None:
        need = self.size + extra
        if need <= len(self._r):
            return
        cap = max(need, 2 * len(self._r))
        for key in ("_x", "_r", "_next", "_tag"):
            old = getattr(self, key)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, key, new)

    @property
    def features(self) -> np.ndarray:
        return self._x[: self.size]

    @property
    def rewards(self) -> np.ndarray:
        return self._r[: self.size]

    @property
    def next_index(self) -> np.ndarray:
        return self._next[: self.size]

    @property
    def provenance(self) -> np.ndarray:
        return self._tag[: self.size]

    @property
    def n_offline(self) -> int:
        return int((self.provenance == OFFLINE).sum())

    @property
    def n_online(self) -> int:
        return int((self.provenance == ONLINE).sum())

    # updates -----------------------------------------------------------------

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.d:
            raise ValueError(f"feature dimension {x.shape[-1]} does not match state dimension {self.d}")

    def add_feature(self, x, reward: float = 0.0, next_index: int = 0, pool: str = "online") -> None:
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        if x.ndim != 1:
            raise ValueError("add_feature takes a single vector; use add_features for batches")
        if np.linalg.norm(x) > 1 + 1e-9:
            raise ValueError(f"feature norm {np.linalg.norm(x):.6g} exceeds 1")
        self._grow(1)
        i = self.size
        self._x[i], self._r[i], self._next[i], self._tag[i] = x, reward, next_index, _POOLS[pool]
        self.size += 1
        if not x.any():
            return
        self.logdet += math.log1p(self.quad(x))
        self.Lambda += np.outer(x, x)
        chol_update(self.chol, x)
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactor()

    def add_features(self, X, rewards=None, next_index=None, pool: str = "offline") -> None:
        """Append a batch; Lambda and its factor are rebuilt once at the end."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_dim(X)
        n = X.shape[0]
        if n == 0:
            return
        if np.linalg.norm(X, axis=1).max() > 1 + 1e-9:
            raise ValueError("feature norm exceeds 1")
        rewards = np.zeros(n) if rewards is None else np.asarray(rewards, dtype=float)
        next_index = np.zeros(n, dtype=np.int64) if next_index is None else np.asarray(next_index)
        self._grow(n)
        sl = slice(self.size, self.size + n)
        self._x[sl], self._r[sl], self._next[sl], self._tag[sl] = X, rewards, next_index, _POOLS[pool]
        self.size += n
        self.Lambda += X.T @ X
        self.refactor()

    def refactor(self) -> None:
        self.Lambda = 0.5 * (self.Lambda + self.Lambda.T)
        self.chol = np.linalg.cholesky(self.Lambda)
        self.logdet = self.logdet_direct()
        self._since_refactor = 0

    def logdet_direct(self) -> float:
        return 2.0 * float(np.log(np.diag(self.chol)).sum())

    # queries -----------------------------------------------------------------

    def quad(self, X) -> np.ndarray | float:
        """x^T Lambda^{-1} x for a vector or for each row of a matrix."""
        X = np.asarray(X, dtype=float)
        Y = solve_triangular(self.chol, X.T, lower=True, check_finite=False)
        out = (Y * Y).sum(axis=0)
        return float(out) if X.ndim == 1 else out

    def solve(self, targets) -> np.ndarray:
        t = np.asarray(targets, dtype=float)
        if t.shape != (self.size,):
            raise ValueError(f"{t.size} targets for {self.size} pooled samples")
        b = self.features.T @ t
        return cho_solve((self.chol, True), b, check_finite=False)

    def bonus(self, X, beta: float):
        """beta * sqrt(logdet(Lambda + x x^T) - logdet(Lambda)) via the determinant lemma."""
        if beta < 0:
            raise ValueError("beta must be non-negative")
        return beta * np.sqrt(np.log1p(self.quad(X)))

    def snapshot(self) -> "RidgeState":
        twin = RidgeState.__new__(RidgeState)
        twin.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})
        return twin

    def dump_arrays(self) -> dict[str, np.ndarray]:
        return {"Lambda": self.Lambda, "chol": self.chol, "logdet": np.array([self.logdet]),
                "lambda": np.array([self.lam])}


def info_gain(start: RidgeState, end: RidgeState) -> float:
    """log det(Lambda_end) - log det(Lambda_start)."""
    if start.d != end.d:
        raise ValueError("dimension mismatch")
    return end.logdet - start.logdet


def normalized_info_gain(gains, d: int, horizon: int) -> float:
    """(1 / sqrt(d H^2)) * sum_h sqrt(gain_h), clipping round-off negatives."""
    gains = np.maximum(np.asarray(gains, dtype=float), 0.0)
    return float(np.sqrt(gains).sum() / math.sqrt(d * horizon ** 2))


@dataclass(frozen=True)
class AlgoConfig:
    K: int
    beta_scale: float = 0.05
    lam: float = 1.0
    zeta: float = 0.1
    mode: str = "dovi"
    seed: int = 0
    value_cap: str = "remaining"
    beta: float | None = None            # explicit override of the scaled formula
    initial_states: tuple[int, ...] | None = None   # cycled adversary schedule; None draws from init
    audit: bool = True

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"K must be non-negative, got {self.K}")
        if self.beta_scale <= 0 or self.lam <= 0:
            raise ValueError("beta_scale and lambda must be positive")
        if not 0 < self.zeta <= 1:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.value_cap not in VALUE_CAPS:
            raise ValueError(f"unknown value_cap {self.value_cap!r}")
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be non-negative")

    def beta_for(self, d: int, horizon: int, n: int) -> float:
        """c * d * H * sqrt(log(d (T + n H) / zeta)) with T = H K."""
        if self.beta is not None:
            return float(self.beta)
        T = horizon * self.K
        arg = d * (T + n * horizon) / self.zeta
        return self.beta_scale * d * horizon * math.sqrt(max(math.log(arg), 0.0)) if arg > 0 else 0.0

    def cap(self, h: int, horizon: int) -> float:
        """Upper truncation for the value estimate at zero-based step h."""
        return float(horizon - h) if self.value_cap == "remaining" else float(horizon - h - 1)

    def half_cap(self, h: int, horizon: int) -> float:
        """Truncation for the mediator-level value at step h: it only collects rewards after h."""
        return float(horizon - h - 1)
