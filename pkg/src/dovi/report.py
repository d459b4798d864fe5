from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimismAudit:
    """Counts of model-prediction-error checks falling outside [-2 * bonus, 0]."""

    checks: int = 0
    above_zero: int = 0
    below_band: int = 0

    def update(self, iota: np.ndarray, bonus: np.ndarray, tol: float = 1e-9) -> None:
        iota = np.asarray(iota)
        self.checks += iota.size
        self.above_zero += int((iota > tol).sum())
        self.below_band += int((iota < -2.0 * np.asarray(bonus) - tol).sum())

    @property
    def above_rate(self) -> float:
        return self.above_zero / self.checks if self.checks else 0.0

    @property
    def below_rate(self) -> float:
        return self.below_band / self.checks if self.checks else 0.0


@dataclass
class RegretReport:
    instance: str
    mode: str
    n: int
    seed: int
    K: int
    horizon: int
    dims: tuple[int, ...]
    beta: float
    lam: float
    beta_scale: float
    zeta: float
    value_cap: str
    regret: np.ndarray
    initial_states: np.ndarray
    delta_trace: dict[str, np.ndarray]
    audits: dict[str, OptimismAudit] = field(default_factory=dict)
    online_features: dict[str, np.ndarray] = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def total_regret(self) -> float:
        return float(self.regret.sum())

    @property
    def delta(self) -> dict[str, float]:
        return {k: (float(v[-1]) if len(v) else 0.0) for k, v in self.delta_trace.items()}
