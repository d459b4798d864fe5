"""Command-line entry point.

Any long flag may also come from ``--config FILE``: one ``key = value`` per
line, ``#`` starts a comment, keys are flag names with or without the leading
dashes (``beta-scale`` and ``beta_scale`` are the same key). Flags given on
the command line win over the file.

Exit codes: 0 success, 1 validation error, 2 one or more sweep cells failed,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import gen_data, load_dataset
from .gallery import UnknownInstanceError, gallery, gallery_names
from .mdp import ModeError, UnsupportedActionError, validate
from .plots import PlotInputError, emit_plots
from .rng import PRNG_NAME, derive_seed
from .ridge import AlgoConfig
from .sweep import (RESULT_COLUMNS, SweepSpec, SweepValidationError, audit_rates, calibrate_beta_scale,
                    csv_text, default_beta_scale, offline_for_seed, prefix, report_rows, run_cell, run_sweep)
from .textio import InstanceFormatError, read_instance, write_instance

EXIT_OK, EXIT_VALIDATION, EXIT_CELL, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit with status 2, which is reserved for failed sweep cells
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_int_list(text: str) -> list[int]:
    """'0-4' -> [0, 1, 2, 3, 4]; '0,10,100' -> [0, 10, 100]; ranges and items may be mixed."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_float_grid(text: str) -> list[float]:
    """'0.01:0.3:0.01' (start:stop:step, inclusive) or a comma list."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def read_config(path: str) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def load_instance(name: str):
    """A gallery name, or a path to an instance text file."""
    if Path(name).is_file():
        return read_instance(name)
    return gallery(name)


def _add_cell_flags(p: argparse.ArgumentParser, with_seed: bool = True) -> None:
    p.add_argument("--instance", required=True, help="gallery name or instance file")
    p.add_argument("--K", type=int, default=500, help="online episodes")
    p.add_argument("--beta-scale", type=float, default=None, help="c in beta; default from the goldens file")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=0.1)
    p.add_argument("--value-cap", choices=("remaining", "strict"), default="remaining")
    if with_seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dovi", description="Deconfounded optimistic value iteration toolkit")
    parser.add_argument("--config", help="key = value file supplying default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gallery", help="list or export gallery instances")
    gsub = g.add_subparsers(dest="gallery_command", required=True)
    gsub.add_parser("list")
    ge = gsub.add_parser("export")
    ge.add_argument("name")
    ge.add_argument("path")

    p = sub.add_parser("gen-data", help="draw offline episodes from the behavior policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("backdoor", "frontdoor"), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run a single (mode, n, seed) cell")
    _add_cell_flags(p)
    p.add_argument("--mode", default=None, help="dovi | dovi_plus | online_only | naive_confounded")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--data", default=None, help="offline dataset file (overrides --n)")
    p.add_argument("--out", default=None, help="write results.csv here")

    p = sub.add_parser("sweep", help="run every (mode, n, seed) cell")
    _add_cell_flags(p, with_seed=False)
    p.add_argument("--modes", default=None, help="comma list; default: the learner plus online_only")
    p.add_argument("--ns", default="0", help="comma list of offline sizes")
    p.add_argument("--seeds", default="0-19", help="e.g. 0-19 or 1,5,9")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None, help="default: $DOVI_WORKERS or 1")
    p.add_argument("--data-dir", default=None)

    p = sub.add_parser("plot", help="emit SVG plots and tidy CSVs from sweep results")
    p.add_argument("--results", required=True)
    p.add_argument("--replay", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("audit", help="optimism audit violation rates")
    _add_cell_flags(p, with_seed=False)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--seeds", default="0-19")

    p = sub.add_parser("calibrate", help="smallest beta scale passing the optimism audit")
    p.add_argument("--instance", required=True)
    p.add_argument("--grid", default="0.01:0.3:0.01")
    p.add_argument("--K", type=int, default=500)
    p.add_argument("--seeds", default="0-19")
    p.add_argument("--tol", type=float, default=0.05)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known_args, _ = pre.parse_known_args(argv)
    if not known_args.config:
        return parser.parse_args(argv)
    values = read_config(known_args.config)
    subparsers = parser._subparsers._group_actions[0].choices          # noqa: SLF001
    seen = set()
    for sub in subparsers.values():
        actions = {a.dest: a for a in sub._actions}                      # noqa: SLF001
        defaults = {}
        for key, raw in values.items():
            if key in actions:
                action = actions[key]
                defaults[key] = action.type(raw) if action.type else raw
                action.required = False
                seen.add(key)
        sub.set_defaults(**defaults)
    unknown = sorted(set(values) - seen)
    if unknown:
        raise ValueError(f"{known_args.config}: unknown key(s): {', '.join(unknown)}")
    return parser.parse_args(argv)


def _resolve_beta(args, instance: str) -> float:
    return args.beta_scale if args.beta_scale is not None else default_beta_scale(instance)


def cmd_gallery(args) -> int:
    if args.gallery_command == "list":
        for name in gallery_names():
            mdp = gallery(name)
            shape = " ".join(f"{k}={v}" for k, v in mdp.shape.items() if v)
            print(f"{name}\t{mdp.mode}\t{shape}")
        return EXIT_OK
    write_instance(gallery(args.name), args.path)
    print(f"wrote {args.path}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    mdp = load_instance(args.instance)
    problems = validate(mdp)
    if problems:
        raise ValueError("; ".join(problems))
    data = gen_data(mdp, args.n, args.mode, args.seed, args.out)
    print(f"wrote {data.n} episodes of {mdp.name} ({data.mode}, seed {args.seed}, {PRNG_NAME}) to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    mdp = load_instance(args.instance)
    mode = args.mode or ("dovi" if mdp.mode == "backdoor" else "dovi_plus")
    if args.data:
        data = load_dataset(args.data)
    elif args.n:
        data = prefix(offline_for_seed(mdp, args.n, args.seed), args.n)
    else:
        data = None
    cfg = AlgoConfig(K=args.K, beta_scale=_resolve_beta(args, mdp.name), lam=args.lam, zeta=args.zeta,
                     value_cap=args.value_cap, seed=derive_seed(args.seed, "online"), mode=mode)
    rep = run_cell(mdp, mode, data, cfg)
    rep.seed = args.seed
    deltas = " ".join(f"{k}={v:.6g}" for k, v in rep.delta.items())
    print(f"{mdp.name} mode={mode} n={rep.n} seed={args.seed} K={rep.K} beta={rep.beta:.6g} "
          f"regret={rep.total_regret:.6g} {deltas}")
    for key, audit in rep.audits.items():
        print(f"audit[{key}] above_zero={audit.above_rate:.4f} below_band={audit.below_rate:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(csv_text(report_rows(rep), RESULT_COLUMNS, f"prng={PRNG_NAME}"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    mdp = gallery(args.instance)
    modes = args.modes.split(",") if args.modes else (
        ["dovi", "online_only"] if mdp.mode == "backdoor" else ["dovi_plus", "online_only"])
    spec = SweepSpec(instance=args.instance, modes=[m.strip() for m in modes], ns=parse_int_list(args.ns),
                     K=args.K, seeds=parse_int_list(args.seeds), out_dir=args.out, beta_scale=args.beta_scale,
                     lam=args.lam, zeta=args.zeta, value_cap=args.value_cap, workers=args.workers,
                     data_dir=args.data_dir)
    result = run_sweep(spec)
    for row in result.summary:
        print(f"{row['mode']:>17} n={row['n']:<7} seeds={row['seeds']} cum_regret={float(row['mean_cum_regret']):.4g} "
              f"[{float(row['ci_low']):.4g}, {float(row['ci_high']):.4g}]")
    if result.failures:
        for (mode, n, seed), msg in sorted(result.failures.items()):
            print(f"cell failed: mode={mode} n={n} seed={seed}: {msg.splitlines()[0]}", file=sys.stderr)
        return EXIT_CELL
    return EXIT_OK


def cmd_plot(args) -> int:
    if not Path(args.results).is_file():
        raise FileNotFoundError(f"results file not found: {args.results}")
    paths = emit_plots(args.results, args.out, args.replay)
    for path in paths.values():
        print(f"wrote {path}")
    return EXIT_OK


def cmd_audit(args) -> int:
    c = _resolve_beta(args, args.instance)
    above, below = audit_rates(args.instance, c, args.K, parse_int_list(args.seeds), args.n)
    print(f"{args.instance} beta_scale={c} K={args.K} n={args.n} above_zero={above:.4f} below_band={below:.4f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    c, scan = calibrate_beta_scale(args.instance, parse_float_grid(args.grid), args.K,
                                   parse_int_list(args.seeds), args.tol)
    for value, above, below in scan:
        print(f"c={value:<6g} above_zero={above:.4f} below_band={below:.4f}")
    if c is None:
        print(f"no grid value passes the audit at tolerance {args.tol}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"calibrated beta_scale for {args.instance}: {c}")
    return EXIT_OK


COMMANDS = {"gallery": cmd_gallery, "gen-data": cmd_gen_data, "run": cmd_run, "sweep": cmd_sweep,
            "plot": cmd_plot, "audit": cmd_audit, "calibrate": cmd_calibrate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, IndexError, ModeError, UnsupportedActionError, UnknownInstanceError,
            InstanceFormatError, SweepValidationError, PlotInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
