"""Offline (observational) datasets and their JSON-lines persistence.

File layout: the first line is a header object::

    {"record": "header", "format": "dovi-offline/1", "instance": ..., "mode": ...,
     "seed": ..., "prng": ..., "horizon": H, "n": n}

followed by one object per step, episodes in order, steps in order::

    {"i": episode, "h": step, "s": s_h, "a": a_h, "u": u_h, "r": r_h, "s_next": s_{h+1}}

Frontdoor files carry ``"m"`` instead of ``"u"``. Rewards are written with
shortest round-trip float formatting, so loading is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import BACKDOOR, ConfoundedMDP, _require_mode
from .rng import PRNG_NAME, draw_rows, make_rng

DATA_FORMAT = "dovi-offline/1"


class DatasetIOError(OSError):
    pass


@dataclass(eq=False)
class OfflineDataset:
    instance: str
    mode: str
    seed: int | None
    horizon: int
    states: np.ndarray     # (n, H + 1)
    actions: np.ndarray    # (n, H)
    rewards: np.ndarray    # (n, H)
    aux: np.ndarray        # (n, H): observed confounder u (backdoor) or mediator m (frontdoor)
    prng: str = PRNG_NAME

    @property
    def n(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def empty(cls, mdp: ConfoundedMDP, mode: str | None = None) -> "OfflineDataset":
        H = mdp.horizon
        return cls(mdp.name, mode or mdp.mode, None, H, np.zeros((0, H + 1), dtype=np.int64),
                   np.zeros((0, H), dtype=np.int64), np.zeros((0, H)), np.zeros((0, H), dtype=np.int64))

    def equals(self, other: "OfflineDataset") -> bool:
        same_meta = (self.instance, self.mode, self.seed, self.horizon, self.prng) == \
            (other.instance, other.mode, other.seed, other.horizon, other.prng)
        return same_meta and all(np.array_equal(getattr(self, k), getattr(other, k))
                                 for k in ("states", "actions", "rewards", "aux"))


def sample_offline_dataset(mdp: ConfoundedMDP, n: int, mode: str | None, seed: int) -> OfflineDataset:
    """Draw n behavior-policy episodes, all episodes advanced one step at a time."""
    mode = mode or mdp.mode
    _require_mode(mdp, mode)
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    H = mdp.horizon
    if n == 0:
        out = OfflineDataset.empty(mdp, mode)
        out.seed = seed
        return out
    rng = make_rng(seed)
    states = np.zeros((n, H + 1), dtype=np.int64)
    actions = np.zeros((n, H), dtype=np.int64)
    rewards = np.zeros((n, H))
    aux = np.zeros((n, H), dtype=np.int64)
    states[:, 0] = draw_rows(np.broadcast_to(mdp.init, (n, mdp.n_states)), rng)
    for h in range(H):
        s = states[:, h]
        w = draw_rows(mdp.conf[h, s], rng)
        a = draw_rows(mdp.behavior[h, s, w], rng)
        actions[:, h] = a
        if mode == BACKDOOR:
            rewards[:, h] = mdp.reward[h, s, a, w]
            aux[:, h] = mdp.obs_map[w]
            states[:, h + 1] = draw_rows(mdp.trans[h, s, a, w], rng)
        else:
            rewards[:, h] = mdp.freward[h, s, a]
            m = draw_rows(mdp.itrans[h, s, a], rng)
            aux[:, h] = m
            states[:, h + 1] = draw_rows(mdp.ftrans[h, s, m, w], rng)
    return OfflineDataset(mdp.name, mode, seed, H, states, actions, rewards, aux)


def gen_data(mdp: ConfoundedMDP, n: int, mode: str | None, seed: int, path: str | Path) -> OfflineDataset:
    data = sample_offline_dataset(mdp, n, mode, seed)
    save_dataset(data, path)
    return data


def save_dataset(data: OfflineDataset, path: str | Path) -> None:
    key = "u" if data.mode == BACKDOOR else "m"
    header = {"record": "header", "format": DATA_FORMAT, "instance": data.instance, "mode": data.mode,
              "seed": data.seed, "prng": data.prng, "horizon": data.horizon, "n": data.n}
    lines = [json.dumps(header, sort_keys=True)]
    for i in range(data.n):
        for h in range(data.horizon):
            rec = {"i": i, "h": h, "s": int(data.states[i, h]), "a": int(data.actions[i, h]),
                   key: int(data.aux[i, h]), "r": float(data.rewards[i, h]), "s_next": int(data.states[i, h + 1])}
            lines.append(json.dumps(rec))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path: str | Path) -> OfflineDataset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset {path}: {exc}") from exc
    lines = text.splitlines()
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f"{path}:1: missing or malformed header") from exc
    if header.get("format") != DATA_FORMAT:
        raise DatasetIOError(f"{path}:1: unsupported format {header.get('format')!r}")
    n, H, mode = int(header["n"]), int(header["horizon"]), header["mode"]
    key = "u" if mode == BACKDOOR else "m"
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n * H:
        raise DatasetIOError(f"{path}: expected {n * H} step records, found {len(body)}")
    states = np.zeros((n, H + 1), dtype=np.int64)
    actions = np.zeros((n, H), dtype=np.int64)
    rewards = np.zeros((n, H))
    aux = np.zeros((n, H), dtype=np.int64)
    for lineno, line in enumerate(body, 2):
        try:
            rec = json.loads(line)
            i, h = rec["i"], rec["h"]
            states[i, h], actions[i, h], aux[i, h] = rec["s"], rec["a"], rec[key]
            rewards[i, h] = rec["r"]
            states[i, h + 1] = rec["s_next"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise DatasetIOError(f"{path}:{lineno}: malformed step record ({exc})") from exc
    return OfflineDataset(header["instance"], mode, header["seed"], H, states, actions, rewards, aux,
                          prng=header["prng"])
