"""Plot emission from sweep CSVs: cumulative regret curves and information gain against n.

Every figure is written as a standalone SVG next to the tidy CSV it was drawn
from. SVG output is made byte-stable (fixed hash salt, no date stamp).
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sweep import csv_text, read_csv_rows  # noqa: E402

CURVE_COLUMNS = ("mode", "n", "k", "seeds", "mean_cum_regret", "ci_low", "ci_high")
DELTA_COLUMNS = ("source", "key", "n", "seeds", "mean_delta")
_REQUIRED = ("instance", "mode", "n", "seed", "k", "cum_regret")


class PlotInputError(ValueError):
    pass


def _parse(rows: list[dict], path, ints, floats, optional=()) -> list[dict]:
    out = []
    for i, row in enumerate(rows, 1):
        rec = {}
        for col in ints:
            try:
                rec[col] = int(row[col])
            except (TypeError, ValueError):
                raise PlotInputError(f"{path}: row {i}: column {col!r} is not an integer: {row[col]!r}")
        for col in floats:
            try:
                rec[col] = float(row[col])
            except (TypeError, ValueError):
                raise PlotInputError(f"{path}: row {i}: column {col!r} is not a number: {row[col]!r}")
            if not math.isfinite(rec[col]):
                raise PlotInputError(f"{path}: row {i}: column {col!r} is not finite")
        for col in optional:
            val = (row.get(col) or "").strip()
            try:
                rec[col] = float(val) if val else None
            except ValueError:
                raise PlotInputError(f"{path}: row {i}: column {col!r} is not a number: {val!r}")
        rec["mode"] = row.get("mode", "")
        out.append(rec)
    return out


def load_results(path) -> list[dict]:
    try:
        rows = read_csv_rows(path, _REQUIRED)
    except ValueError as exc:
        raise PlotInputError(str(exc)) from exc
    return _parse(rows, path, ("n", "seed", "k"), ("cum_regret",), ("delta_h", "delta1", "delta2"))


def regret_curves(records: list[dict]) -> list[dict]:
    """Mean cumulative regret per (mode, n, k) with a 95% normal band across seeds."""
    groups: dict[tuple[str, int, int], list[float]] = {}
    for r in records:
        groups.setdefault((r["mode"], r["n"], r["k"]), []).append(r["cum_regret"])
    out = []
    for (mode, n, k), vals in sorted(groups.items()):
        x = np.asarray(vals)
        mean = float(x.mean())
        half = 1.96 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
        out.append({"mode": mode, "n": n, "k": k, "seeds": x.size, "mean_cum_regret": repr(mean),
                    "ci_low": repr(mean - half), "ci_high": repr(mean + half)})
    return out


def delta_series(records: list[dict], replay_rows: list[dict] | None) -> list[dict]:
    """Mean information gain per n: replayed values when available, else live end-of-run values."""
    out = []
    if replay_rows:
        for key in ("replay_delta_h", "replay_delta1", "replay_delta2"):
            by_n: dict[int, list[float]] = {}
            for row in replay_rows:
                if row.get(key):
                    by_n.setdefault(int(row["n"]), []).append(float(row[key]))
            for n, vals in sorted(by_n.items()):
                out.append({"source": "replay", "key": key.replace("replay_", ""), "n": n, "seeds": len(vals),
                            "mean_delta": repr(float(np.mean(vals)))})
        return out
    last: dict[tuple[str, int, int], dict] = {}
    for r in records:
        cell = (r["mode"], r["n"], r["seed"])
        if cell not in last or r["k"] > last[cell]["k"]:
            last[cell] = r
    for key in ("delta_h", "delta1", "delta2"):
        by_n: dict[int, list[float]] = {}
        for r in last.values():
            if r.get(key) is not None:
                by_n.setdefault(r["n"], []).append(r[key])
        for n, vals in sorted(by_n.items()):
            out.append({"source": "live", "key": key, "n": n, "seeds": len(vals),
                        "mean_delta": repr(float(np.mean(vals)))})
    return out


def _save(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "dovi", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(results_csv, out_dir, replay_csv=None) -> dict[str, Path]:
    records = load_results(results_csv)
    if not records:
        raise PlotInputError(f"{results_csv}: no data rows")
    replay_rows = None
    if replay_csv is not None and Path(replay_csv).exists():
        try:
            replay_rows = read_csv_rows(replay_csv, ("n",))
        except ValueError as exc:
            raise PlotInputError(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    curves = regret_curves(records)
    paths["curves_csv"] = out / "regret_curves.csv"
    paths["curves_csv"].write_text(csv_text(curves, CURVE_COLUMNS))
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, n in sorted({(c["mode"], c["n"]) for c in curves}):
        sel = [c for c in curves if c["mode"] == mode and c["n"] == n]
        k = np.array([c["k"] for c in sel])
        mean = np.array([float(c["mean_cum_regret"]) for c in sel])
        line, = ax.plot(k, mean, label=f"{mode}, n={n}")
        if max(c["seeds"] for c in sel) > 1:
            ax.fill_between(k, [float(c["ci_low"]) for c in sel], [float(c["ci_high"]) for c in sel],
                            color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("episode k")
    ax.set_ylabel("cumulative regret")
    ax.legend(fontsize=8)
    paths["curves_svg"] = out / "regret_curves.svg"
    _save(fig, paths["curves_svg"])

    deltas = delta_series(records, replay_rows)
    paths["delta_csv"] = out / "delta_vs_n.csv"
    paths["delta_csv"].write_text(csv_text(deltas, DELTA_COLUMNS))
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in sorted({d["key"] for d in deltas}):
        sel = [d for d in deltas if d["key"] == key]
        ax.plot([d["n"] for d in sel], [float(d["mean_delta"]) for d in sel], marker="o", label=key)
    ax.set_xlabel("offline episodes n")
    ax.set_ylabel("normalized information gain")
    if deltas:
        ax.legend(fontsize=8)
    paths["delta_svg"] = out / "delta_vs_n.svg"
    _save(fig, paths["delta_svg"])
    return paths
