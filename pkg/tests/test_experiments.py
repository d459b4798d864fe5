from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from dovi import sweep as SW
from dovi.data import DatasetIOError, gen_data, load_dataset, sample_offline_dataset
from dovi.gallery import gallery
from dovi.plots import PlotInputError, emit_plots
from dovi.sweep import (REPLAY_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS, SweepSpec, SweepValidationError,
                        read_csv_rows, run_sweep)

GOLDEN_DIR = Path(__file__).parent / "golden"


# datasets ------------------------------------------------------------------


@pytest.mark.parametrize("name", ["BD-2", "FD-2"])
def test_dataset_round_trip(name, tmp_path):
    mdp = gallery(name)
    data = gen_data(mdp, 200, None, 11, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl")
    assert back.equals(data)
    header = json.loads((tmp_path / "d.jsonl").read_text().splitlines()[0])
    assert header["prng"] == "xoshiro256**/splitmix64" and header["seed"] == 11 and header["n"] == 200


def test_empty_dataset_is_header_only(tmp_path):
    path = tmp_path / "empty.jsonl"
    gen_data(gallery("BD-2"), 0, "backdoor", 1, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["n"] == 0
    assert load_dataset(path).n == 0


def test_dataset_errors(tmp_path):
    with pytest.raises(DatasetIOError, match="cannot read"):
        load_dataset(tmp_path / "missing.jsonl")
    path = tmp_path / "d.jsonl"
    gen_data(gallery("BD-2"), 3, None, 0, path)
    lines = path.read_text().splitlines()
    lines[3] = '{"i": 1, "h": 1'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetIOError, match=":4: malformed"):
        load_dataset(path)
    path.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(DatasetIOError, match="expected 6 step records"):
        load_dataset(path)


def test_trap2_confounded_reward_law():
    # every arm is taken mostly when it matches w, so E[r | a] = 0.9 for both arms
    data = sample_offline_dataset(gallery("TRAP-2"), 10**5, "backdoor", seed=3)
    for a in range(2):
        r = data.rewards[data.actions[:, 0] == a, 0]
        assert abs(r.mean() - 0.9) <= 4 * math.sqrt(0.9 * 0.1 / r.size)
    assert abs((data.actions[:, 0] == 1).mean() - 0.5) <= 4 * math.sqrt(0.25 / 10**5)


def test_offline_sizes_are_nested_prefixes():
    mdp = gallery("BD-2")
    big = SW.offline_for_seed(mdp, 1000, 4)
    small = SW.prefix(big, 100)
    assert small.n == 100 and np.array_equal(small.states, big.states[:100])


# sweeps --------------------------------------------------------------------


def _spec(out, **kw):
    base = dict(instance="BD-2", modes=["dovi", "online_only"], ns=[0, 50, 500], K=30, seeds=[0, 1, 2],
                out_dir=str(out), workers=1)
    base.update(kw)
    return SweepSpec(**base)


def test_sweep_outputs_are_byte_identical(tmp_path):
    run_sweep(_spec(tmp_path / "a"))
    run_sweep(_spec(tmp_path / "b"))
    run_sweep(_spec(tmp_path / "c", workers=2))
    for name in ("results.csv", "summary.csv", "replay.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
        assert a == (tmp_path / "c" / name).read_bytes(), name
    assert not (tmp_path / "a" / "failures.tsv").exists()


def test_sweep_with_cached_datasets_matches(tmp_path):
    run_sweep(_spec(tmp_path / "a", modes=["dovi"]))
    run_sweep(_spec(tmp_path / "b", modes=["dovi"], data_dir=str(tmp_path / "data")))
    run_sweep(_spec(tmp_path / "c", modes=["dovi"], data_dir=str(tmp_path / "data")))
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "b" / "results.csv").read_bytes() == (tmp_path / "c" / "results.csv").read_bytes()


def test_frontdoor_sweep(tmp_path):
    res = run_sweep(_spec(tmp_path, instance="FD-2", modes=["dovi_plus"], ns=[0, 100], seeds=[0]))
    rows = read_csv_rows(tmp_path / "results.csv", RESULT_COLUMNS)
    assert rows[0]["delta_h"] == "" and rows[0]["delta1"] != "" and rows[0]["delta2"] != ""
    assert [r["replay_delta_h"] for r in res.replay] == ["", ""]


@pytest.mark.parametrize("bad, match", [
    (dict(seeds=[]), "seed list is empty"),
    (dict(seeds=[1, 1]), "not distinct"),
    (dict(ns=[]), "n grid is empty"),
    (dict(ns=[-5]), "negative"),
    (dict(modes=[]), "mode list is empty"),
    (dict(modes=["dovi_plus"]), "not available"),
])
def test_sweep_validation(bad, match, tmp_path):
    with pytest.raises(SweepValidationError, match=match):
        run_sweep(_spec(tmp_path, **bad))


def test_summary_matches_naive_recomputation(tmp_path):
    res = run_sweep(_spec(tmp_path))
    rows = read_csv_rows(tmp_path / "results.csv", RESULT_COLUMNS)
    summary = read_csv_rows(tmp_path / "summary.csv", SUMMARY_COLUMNS)
    assert len(rows) == 2 * 3 * 3 * 30
    # cumulative column is the running sum of per-episode regret
    for (mode, n, seed), rep in res.reports.items():
        cell = [r for r in rows if (r["mode"], int(r["n"]), int(r["seed"])) == (mode, n, seed)]
        running = 0.0
        for r in cell:
            running += float(r["regret_k"])
            assert abs(float(r["cum_regret"]) - running) <= 1e-9
    for srow in summary:
        finals = []
        lasts = []
        for seed in (0, 1, 2):
            cell = [r for r in rows if r["mode"] == srow["mode"] and r["n"] == srow["n"] and int(r["seed"]) == seed]
            finals.append(float(cell[-1]["cum_regret"]))
            lasts.append(sum(float(r["regret_k"]) for r in cell[-100:]) / len(cell[-100:]))
        m = sum(finals) / 3
        sd = math.sqrt(sum((x - m) ** 2 for x in finals) / 2)
        assert float(srow["mean_cum_regret"]) == pytest.approx(m, abs=1e-9)
        assert float(srow["ci_low"]) == pytest.approx(m - 1.96 * sd / math.sqrt(3), abs=1e-9)
        assert float(srow["ci_high"]) == pytest.approx(m + 1.96 * sd / math.sqrt(3), abs=1e-9)
        assert float(srow["mean_last_regret"]) == pytest.approx(sum(lasts) / 3, abs=1e-9)


def test_replay_delta_non_increasing(tmp_path):
    res = run_sweep(_spec(tmp_path, modes=["dovi"], ns=[0, 10, 100, 1000, 5000], K=60))
    assert len(res.replay) == 3 * 5
    for seed in (0, 1, 2):
        series = [float(r["replay_delta_h"]) for r in res.replay if r["seed"] == seed]
        assert all(b <= a + 1e-12 for a, b in zip(series, series[1:])), series
        assert series[-1] < series[0]


def test_failed_cells_are_recorded(tmp_path, monkeypatch):
    real = SW.run_cell

    def flaky(mdp, mode, data, cfg, fm=None):
        if mode == "online_only":
            raise RuntimeError("boom")
        return real(mdp, mode, data, cfg, fm)

    monkeypatch.setattr(SW, "run_cell", flaky)
    res = run_sweep(_spec(tmp_path, ns=[0], seeds=[0, 1]))
    assert set(res.failures) == {("online_only", 0, 0), ("online_only", 0, 1)}
    assert len(res.reports) == 2
    text = (tmp_path / "failures.tsv").read_text()
    assert "RuntimeError: boom" in text and len(text.splitlines()) == 2


def test_results_csv_golden(tmp_path):
    # frozen output of a pinned tiny sweep; any change to columns, ordering, float formatting
    # or the random streams shows up here
    run_sweep(SweepSpec(instance="BD-2", modes=["dovi", "naive_confounded"], ns=[0, 20], K=4, seeds=[0],
                        out_dir=str(tmp_path), workers=1))
    for name in ("results.csv", "summary.csv", "replay.csv"):
        assert (tmp_path / name).read_text() == (GOLDEN_DIR / f"bd2_pinned_{name}").read_text(), name


def test_csv_headers():
    for cols in (RESULT_COLUMNS, SUMMARY_COLUMNS, REPLAY_COLUMNS):
        assert len(set(cols)) == len(cols)
    text = (GOLDEN_DIR / "bd2_pinned_results.csv").read_text().splitlines()
    assert text[0].startswith("# prng=xoshiro256**/splitmix64 instance=BD-2 seeds=0")
    assert text[1] == ",".join(RESULT_COLUMNS)


# plots ---------------------------------------------------------------------


def test_plots_emitted_and_stable(tmp_path):
    run_sweep(_spec(tmp_path / "sw", ns=[0, 100]))
    paths = emit_plots(tmp_path / "sw" / "results.csv", tmp_path / "p1", tmp_path / "sw" / "replay.csv")
    again = emit_plots(tmp_path / "sw" / "results.csv", tmp_path / "p2", tmp_path / "sw" / "replay.csv")
    for key, path in paths.items():
        assert path.stat().st_size > 0
        assert path.read_bytes() == again[key].read_bytes(), key
    curves = read_csv_rows(paths["curves_csv"], ("mode", "n", "k", "mean_cum_regret"))
    assert len(curves) == 2 * 2 * 30
    deltas = read_csv_rows(paths["delta_csv"], ("source", "key", "n", "mean_delta"))
    assert {d["source"] for d in deltas} == {"replay"}


def test_plot_single_seed_without_replay(tmp_path):
    run_sweep(_spec(tmp_path / "sw", seeds=[0], ns=[0]))
    (tmp_path / "sw" / "replay.csv").unlink()
    paths = emit_plots(tmp_path / "sw" / "results.csv", tmp_path / "p", tmp_path / "sw" / "replay.csv")
    deltas = read_csv_rows(paths["delta_csv"], ("source",))
    assert {d["source"] for d in deltas} == {"live"}


def test_plot_input_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("instance,mode,n,seed,k\nBD-2,dovi,0,0,1\n")
    with pytest.raises(PlotInputError, match="cum_regret"):
        emit_plots(bad, tmp_path / "p")
    bad.write_text("instance,mode,n,seed,k,cum_regret\nBD-2,dovi,0,0,1,0.5\nBD-2,dovi,0,0,two,0.7\n")
    with pytest.raises(PlotInputError, match="row 2"):
        emit_plots(bad, tmp_path / "p")
    bad.write_text("instance,mode,n,seed,k,cum_regret\n")
    with pytest.raises(PlotInputError, match="no data rows"):
        emit_plots(bad, tmp_path / "p")
