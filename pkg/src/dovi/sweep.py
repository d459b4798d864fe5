"""Sweep orchestration: cells over (mode, n, seed), tidy CSV output, summaries.

Seeding: cell (mode, n, seed) plays online with ``derive_seed(seed, "online")``
and reads the first n episodes of one offline dataset per seed drawn with
``derive_seed(seed, "offline")``, so offline designs are nested across the n
grid and every mode sees the same online randomness.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .backdoor import offline_design, replay_delta, run_dovi
from .data import OfflineDataset, load_dataset, sample_offline_dataset, save_dataset
from .features import FeatureMap, build_features
from .frontdoor import run_dovi_plus
from .gallery import gallery
from .mdp import BACKDOOR, ConfoundedMDP, sample_online_step
from .report import RegretReport
from .ridge import AlgoConfig, RidgeState, normalized_info_gain
from .rng import PRNG_NAME, derive_seed, draw, make_rng

RESULT_COLUMNS = ("instance", "mode", "n", "seed", "k", "regret_k", "cum_regret",
                  "delta_h", "delta1", "delta2", "beta")
SUMMARY_COLUMNS = ("instance", "mode", "n", "seeds", "K", "mean_cum_regret", "ci_low", "ci_high",
                   "mean_last_regret", "mean_delta_h", "mean_delta1", "mean_delta2",
                   "above_zero_rate", "below_band_rate")
REPLAY_COLUMNS = ("instance", "seed", "n", "replay_delta_h", "replay_delta1", "replay_delta2")
WORKERS_ENV = "DOVI_WORKERS"
LAST_WINDOW = 100


class SweepValidationError(ValueError):
    pass


def load_goldens() -> dict:
    return json.loads(resources.files("dovi").joinpath("goldens.json").read_text())


def default_beta_scale(instance: str) -> float:
    table = load_goldens()["beta_scale"]
    return float(table.get(instance, table["default"]))


@dataclass
class SweepSpec:
    instance: str
    modes: list[str]
    ns: list[int]
    K: int
    seeds: list[int]
    out_dir: str | None = None
    beta_scale: float | None = None     # None: calibrated value from the goldens file
    lam: float = 1.0
    zeta: float = 0.1
    value_cap: str = "remaining"
    workers: int | None = None          # None: $DOVI_WORKERS, else 1
    data_dir: str | None = None         # cache offline datasets here when given

    def validate(self) -> None:
        problems = []
        if not self.modes:
            problems.append("mode list is empty")
        if not self.ns:
            problems.append("n grid is empty")
        if not self.seeds:
            problems.append("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append(f"seeds are not distinct: {self.seeds}")
        if any(n < 0 for n in self.ns):
            problems.append(f"negative offline size in {self.ns}")
        if self.K < 0:
            problems.append(f"K must be non-negative, got {self.K}")
        mdp = gallery(self.instance)
        allowed = ("dovi", "online_only", "naive_confounded") if mdp.mode == BACKDOOR else ("dovi_plus", "online_only")
        bad = [m for m in self.modes if m not in allowed]
        if bad:
            problems.append(f"modes {bad} not available for {mdp.mode}-mode instance {self.instance}")
        if problems:
            raise SweepValidationError("; ".join(problems))

    def resolved_beta_scale(self) -> float:
        return self.beta_scale if self.beta_scale is not None else default_beta_scale(self.instance)

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))


# ---------------------------------------------------------------------------
# single cells
# ---------------------------------------------------------------------------


def offline_for_seed(mdp: ConfoundedMDP, n: int, seed: int, data_dir: str | None = None) -> OfflineDataset:
    """The seed's offline dataset of size n; datasets for a seed are nested prefixes of each other."""
    data_seed = derive_seed(seed, "offline")
    if data_dir is not None:
        path = Path(data_dir) / f"{mdp.name}_seed{seed}_n{n}.jsonl"
        if path.exists():
            return load_dataset(path)
        data = sample_offline_dataset(mdp, n, mdp.mode, data_seed)
        Path(data_dir).mkdir(parents=True, exist_ok=True)
        save_dataset(data, path)
        return data
    return sample_offline_dataset(mdp, n, mdp.mode, data_seed)


def prefix(data: OfflineDataset, n: int) -> OfflineDataset:
    return OfflineDataset(data.instance, data.mode, data.seed, data.horizon, data.states[:n], data.actions[:n],
                          data.rewards[:n], data.aux[:n], data.prng)


def run_cell(mdp: ConfoundedMDP, mode: str, data: OfflineDataset | None, cfg: AlgoConfig,
             fm: FeatureMap | None = None) -> RegretReport:
    cfg = AlgoConfig(**{**cfg.__dict__, "mode": mode})
    if mdp.mode == BACKDOOR:
        return run_dovi(mdp, data, cfg, fm)
    return run_dovi_plus(mdp, data, cfg, fm)


def report_rows(rep: RegretReport) -> list[dict]:
    cum = rep.cumulative
    rows = []
    for k in range(rep.K):
        row = {"instance": rep.instance, "mode": rep.mode, "n": rep.n, "seed": rep.seed, "k": k + 1,
               "regret_k": repr(float(rep.regret[k])), "cum_regret": repr(float(cum[k])),
               "delta_h": "", "delta1": "", "delta2": "", "beta": repr(float(rep.beta))}
        for key, trace in rep.delta_trace.items():
            row[key] = repr(float(trace[k]))
        rows.append(row)
    return rows


def _cell_job(args):
    instance, mode, n, n_max, seed, K, cfg_kwargs, data_dir = args
    try:
        mdp = gallery(instance)
        data = prefix(offline_for_seed(mdp, n_max, seed, data_dir), n) if n else None
        cfg = AlgoConfig(K=K, seed=derive_seed(seed, "online"), **cfg_kwargs)
        rep = run_cell(mdp, mode, data, cfg)
        rep.seed, rep.n = seed, n      # label rows by the grid cell, also for online_only
        return (mode, n, seed), rep, None
    except Exception as exc:  # recorded, the sweep continues
        return (mode, n, seed), None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    spec: SweepSpec
    reports: dict[tuple[str, int, int], RegretReport] = field(default_factory=dict)
    failures: dict[tuple[str, int, int], str] = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    replay: list[dict] = field(default_factory=list)


def normal_ci(values, z: float = 1.96) -> tuple[float, float, float]:
    """(mean, low, high) of a 95% normal interval; a single value gives a zero-width interval."""
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    if x.size < 2:
        return mean, mean, mean
    half = z * float(x.std(ddof=1)) / math.sqrt(x.size)
    return mean, mean - half, mean + half


def summarize(reports: dict[tuple[str, int, int], RegretReport], instance: str) -> list[dict]:
    cells: dict[tuple[str, int], list[RegretReport]] = {}
    for (mode, n, _), rep in sorted(reports.items()):
        cells.setdefault((mode, n), []).append(rep)
    out = []
    for (mode, n), reps in sorted(cells.items()):
        mean, lo, hi = normal_ci([r.total_regret for r in reps])
        row = {"instance": instance, "mode": mode, "n": n, "seeds": len(reps), "K": reps[0].K,
               "mean_cum_regret": repr(mean), "ci_low": repr(lo), "ci_high": repr(hi),
               "mean_last_regret": repr(float(np.mean([r.regret[-LAST_WINDOW:].mean() if r.K else 0.0
                                                      for r in reps]))),
               "mean_delta_h": "", "mean_delta1": "", "mean_delta2": ""}
        for key in reps[0].delta_trace:
            row[f"mean_{key}"] = repr(float(np.mean([r.delta[key] for r in reps])))
        checks = sum(a.checks for r in reps for a in r.audits.values())
        above = sum(a.above_zero for r in reps for a in r.audits.values())
        below = sum(a.below_band for r in reps for a in r.audits.values())
        row["above_zero_rate"] = repr(above / checks if checks else 0.0)
        row["below_band_rate"] = repr(below / checks if checks else 0.0)
        out.append(row)
    return out


def offline_feature_blocks(mdp: ConfoundedMDP, fm: FeatureMap, data: OfflineDataset | None) -> dict[str, list]:
    """Per-step offline design matrices keyed like the online feature streams."""
    H = mdp.horizon
    if mdp.mode == BACKDOOR:
        if data is None or not data.n:
            return {"psi": [np.zeros((0, fm.d))] * H}
        return {"psi": [offline_design(fm, data, "dovi", h)[0] for h in range(H)]}
    if data is None or not data.n:
        return {"psi": [np.zeros((0, fm.d))] * H, "gamma": [np.zeros((0, fm.d2))] * H}
    psi, gamma = [], []
    for h in range(H):
        s, a, m = data.states[:, h], data.actions[:, h], data.aux[:, h]
        psi.append(fm.phi[h, s, a, m])
        gamma.append(fm.gamma[h, s, a])
    return {"psi": psi, "gamma": gamma}


_REPLAY_KEYS = {"psi": ("delta_h", "delta1"), "gamma": ("delta2", "delta2")}


def replay_curve(mdp: ConfoundedMDP, reference: RegretReport, ns: list[int], seed: int, lam: float,
                 data_dir: str | None = None) -> list[dict]:
    """Information gain of one fixed online stream on top of nested offline designs of each size n."""
    fm = build_features(mdp)
    full = offline_for_seed(mdp, max(ns), seed, data_dir) if max(ns) else None
    rows = []
    for n in sorted(ns):
        blocks = offline_feature_blocks(mdp, fm, prefix(full, n) if n else None)
        row = {"instance": mdp.name, "seed": seed, "n": n, "replay_delta_h": "", "replay_delta1": "",
               "replay_delta2": ""}
        for key, offline in blocks.items():
            col = _REPLAY_KEYS[key][0 if mdp.mode == BACKDOOR else 1]
            row[f"replay_{col}"] = repr(replay_delta(reference.online_features[key], offline, lam))
        rows.append(row)
    return rows


def run_sweep(spec: SweepSpec) -> SweepResult:
    spec.validate()
    cfg_kwargs = dict(beta_scale=spec.resolved_beta_scale(), lam=spec.lam, zeta=spec.zeta,
                      value_cap=spec.value_cap)
    n_max = max(spec.ns)
    jobs = [(spec.instance, mode, n, n_max, seed, spec.K, cfg_kwargs, spec.data_dir)
            for mode in spec.modes for n in spec.ns for seed in spec.seeds]
    if spec.data_dir is not None and n_max:
        # materialize the shared datasets once, before workers race for them
        mdp = gallery(spec.instance)
        for seed in spec.seeds:
            offline_for_seed(mdp, n_max, seed, spec.data_dir)
    result = SweepResult(spec)
    workers = spec.resolved_workers()
    if workers == 1:
        outcomes = [_cell_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs))
    for key, rep, err in outcomes:
        if err is None:
            result.reports[key] = rep
        else:
            result.failures[key] = err
    for key in sorted(result.reports):
        result.rows.extend(report_rows(result.reports[key]))
    result.summary = summarize(result.reports, spec.instance)
    result.replay = _replays(spec, result)
    if spec.out_dir is not None:
        write_outputs(result, spec.out_dir)
    return result


def _replays(spec: SweepSpec, result: SweepResult) -> list[dict]:
    mdp = gallery(spec.instance)
    preferred = "dovi" if mdp.mode == BACKDOOR else "dovi_plus"
    ref_mode = preferred if preferred in spec.modes else spec.modes[0]
    ref_n = min(spec.ns)
    rows = []
    for seed in sorted(spec.seeds):
        ref = result.reports.get((ref_mode, ref_n, seed))
        if ref is not None:
            rows.extend(replay_curve(mdp, ref, spec.ns, seed, spec.lam, spec.data_dir))
    return rows


# ---------------------------------------------------------------------------
# CSV i/o
# ---------------------------------------------------------------------------


def csv_text(rows: list[dict], columns, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def provenance(spec: SweepSpec) -> str:
    return (f"prng={PRNG_NAME} instance={spec.instance} seeds={','.join(map(str, spec.seeds))} "
            f"beta_scale={spec.resolved_beta_scale()!r} lambda={spec.lam!r} zeta={spec.zeta!r} "
            f"value_cap={spec.value_cap}")


def write_outputs(result: SweepResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        note = provenance(result.spec)
        paths = {"results": out / "results.csv", "summary": out / "summary.csv", "replay": out / "replay.csv"}
        paths["results"].write_text(csv_text(result.rows, RESULT_COLUMNS, note))
        paths["summary"].write_text(csv_text(result.summary, SUMMARY_COLUMNS, note))
        paths["replay"].write_text(csv_text(result.replay, REPLAY_COLUMNS, note))
        if result.failures:
            lines = [f"{mode}\t{n}\t{seed}\t{msg.splitlines()[0]}"
                     for (mode, n, seed), msg in sorted(result.failures.items())]
            paths["failures"] = out / "failures.tsv"
            paths["failures"].write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write sweep outputs under {out}: {exc}") from exc
    return paths


def read_csv_rows(path: str | Path, required) -> list[dict]:
    """Parse a results-style CSV, skipping '#' provenance lines; missing columns raise with their name."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    return list(reader)


# ---------------------------------------------------------------------------
# uniform-exploration diagnostic
# ---------------------------------------------------------------------------


def uniform_exploration_delta(mdp: ConfoundedMDP, n: int, K: int, seed: int, lam: float = 1.0) -> float:
    """Normalized information gain when K online episodes pick actions uniformly at random.

    Offline samples come from the instance's behavior policy. Backdoor instances only.
    """
    fm = build_features(mdp)
    data = sample_offline_dataset(mdp, n, mdp.mode, derive_seed(seed, "offline")) if n else None
    rng = make_rng(derive_seed(seed, "online"))
    H, A = mdp.horizon, mdp.n_actions
    ridges = []
    for h in range(H):
        st = RidgeState(fm.d, lam)
        if data is not None:
            X, r, nxt = offline_design(fm, data, "dovi", h)
            st.add_features(X, r, nxt, pool="offline")
        ridges.append(st)
    start = [st.logdet for st in ridges]
    for _ in range(K):
        s = draw(mdp.init, rng)
        for h in range(H):
            a = draw(np.full(A, 1.0 / A), rng)
            ridges[h].add_feature(fm.psi[h, s, a], pool="online")
            _, s, _ = sample_online_step(mdp, h, s, a, rng)
    return normalized_info_gain([st.logdet - s0 for st, s0 in zip(ridges, start)], fm.d, H)


def canonical_reference(d: int, H: int, n: int, K: int) -> float:
    """sqrt(d log(1 + K / (n + d))) * H / sqrt(d H^2): the value when Lambda grows isotropically."""
    return math.sqrt(d * math.log1p(K / (n + d))) * H / math.sqrt(d * H * H)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


def audit_rates(instance: str, beta_scale: float, K: int, seeds, n: int = 0) -> tuple[float, float]:
    """Pooled (above-zero, below-band) optimism violation rates over seeds; worst stage for two-stage runs."""
    mdp = gallery(instance)
    mode = "dovi" if mdp.mode == BACKDOOR else "dovi_plus"
    counts: dict[str, list[int]] = {}
    for seed in seeds:
        data = offline_for_seed(mdp, n, seed) if n else None
        rep = run_cell(mdp, mode, data, AlgoConfig(K=K, beta_scale=beta_scale, seed=derive_seed(seed, "online")))
        for key, audit in rep.audits.items():
            c = counts.setdefault(key, [0, 0, 0])
            c[0] += audit.above_zero
            c[1] += audit.below_band
            c[2] += audit.checks
    above = max(c[0] / c[2] for c in counts.values())
    below = max(c[1] / c[2] for c in counts.values())
    return above, below


def calibrate_beta_scale(instance: str, grid, K: int = 500, seeds=range(20), tol: float = 0.05):
    """Smallest c on the grid whose audit violation rates are both at most tol; also returns the scan."""
    scan = []
    for c in sorted(grid):
        above, below = audit_rates(instance, c, K, seeds)
        scan.append((c, above, below))
        if above <= tol and below <= tol:
            return c, scan
    return None, scan
