"""Command-line entry points: ``python -m pardensur <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .backtest import PortfolioBacktest, gen_synthetic, save_csv
from .bench import (
    METHODS,
    CountingEvaluator,
    ExperimentSpec,
    _dump_json,
    _write,
    frontier_csv,
    history_csv,
    indicator_row,
    indicators_csv,
    load_spec,
    read_frontier,
    read_history,
    read_indicators,
    reference_frontier,
    run_experiment,
    run_method,
    spec_from_dict,
    stats_report,
)
from .metrics import hypervolume


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--offspring", type=int, default=None)
    p.add_argument("--method", choices=sorted(METHODS), default=None)
    p.add_argument("--acceptance", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--lookahead", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--horizon", type=int, default=None, metavar="H")
    p.add_argument("--data", default=None, metavar="CSV")
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--config", default=None, metavar="TOML")


def _spec(args) -> ExperimentSpec:
    over = dict(
        search_budget=args.budget,
        search_pop_size=args.pop,
        search_offspring=args.offspring,
        backtest_horizon=args.horizon,
        data_csv=args.data,
        out_dir=args.out,
    )
    if args.seed is not None:
        over["base_seed"] = args.seed
    if args.method is not None:
        over["methods"] = (args.method,)
    if args.config:
        return load_spec(args.config, **over)
    return spec_from_dict({}, **over)


def _simulator(spec: ExperimentSpec) -> PortfolioBacktest:
    return PortfolioBacktest(spec.data.load(), spec.backtest, seed=spec.evaluation_seed)


def cmd_gen_data(args) -> int:
    data = gen_synthetic(args.assets, args.days, args.seed or 0)
    out = Path(args.out or "market.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(data, out)
    print(f"wrote {data.n_assets} assets x {data.n_days} days to {out}")
    return 0


def cmd_backtest(args) -> int:
    spec = _spec(args)
    sim = _simulator(spec)
    genes = np.array(args.genes, dtype=float)
    res = sim.run(genes)
    hp = sim.decode(genes)
    print(json.dumps({
        "genes": genes.tolist(),
        "gamma_risk": hp.gamma_risk,
        "gamma_trade": hp.gamma_trade,
        "gamma_hold": hp.gamma_hold,
        "risk_pct": round(res.objectives.risk_pct, 6),
        "return_pct": round(res.objectives.return_pct, 6),
    }, sort_keys=True))
    return 0


def cmd_search(args) -> int:
    spec = _spec(args)
    method = args.method or "pardensur-lookahead"
    cfg = replace(spec.search, seed=spec.base_seed)
    if method.startswith("pardensur"):
        flags = {}
        if args.acceptance is not None:
            flags["acceptance"] = args.acceptance
        if args.lookahead is not None:
            flags["look_ahead"] = args.lookahead
        if flags:
            from .search import run as run_search
            from .evo import NSGA2
            cfg = replace(cfg, **flags)
            counter = CountingEvaluator(_simulator(spec))
            res = run_search(cfg, NSGA2(pop_size=cfg.pop_size, offspring_size=cfg.offspring,
                                        seed=cfg.seed), counter)
            return _emit_search(spec, method, res, counter)
    counter = CountingEvaluator(_simulator(spec))
    res = run_method(method, counter, cfg)
    return _emit_search(spec, method, res, counter)


def _emit_search(spec, method, res, counter) -> int:
    out = Path(spec.out_dir)
    _write(out / "frontier.csv", frontier_csv(res.pareto))
    _write(out / "history.csv", history_csv(res.history))
    print(f"{method}: {counter.calls} evaluations, {len(res.pareto)} frontier points, "
          f"HV {hypervolume(res.pareto):.6f}; files in {out}")
    return 0


def cmd_reference(args) -> int:
    spec = _spec(args)
    count = args.count or spec.reference_count
    front, hv, _ = reference_frontier(_simulator(spec), count, spec.reference_seed)
    out = Path(spec.out_dir)
    _write(out / "frontier.csv", frontier_csv(front))
    print(f"reference: {count} samples, {len(front)} frontier points, HV {hv:.6f}")
    return 0


def cmd_experiment(args) -> int:
    spec = _spec(args)
    if args.repeats:
        spec = replace(spec, repeats=args.repeats)
    res = run_experiment(spec, log=print)
    print(f"reference HV {res['reference_hv']:.6f}; artifacts in {spec.out_dir}")
    return 0


def cmd_metrics(args) -> int:
    ref = read_frontier(args.reference)
    ref_hv = hypervolume(ref)
    rows = []
    for run_dir in args.runs:
        d = Path(run_dir)
        method = d.parent.name
        seed = int(d.name.split("_")[-1]) if d.name.startswith("seed_") else 0
        hist = read_history(d / "history.csv", seed)
        front = read_frontier(d / "frontier.csv")
        rows.append(indicator_row(method, seed, front, hist, ref, ref_hv, (0.95, 0.99)))
    text = indicators_csv(rows, (0.95, 0.99))
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    rows = read_indicators(args.indicators)
    text = _dump_json(stats_report(rows))
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pardensur", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic market CSV")
    _common(p)
    p.add_argument("--assets", type=int, default=10)
    p.add_argument("--days", type=int, default=750)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("backtest", help="objectives of one candidate")
    _common(p)
    p.add_argument("genes", nargs=3, type=float, help="three genes in [0, 1]")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("search", help="one method, one seed")
    _common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("reference", help="random-search reference frontier")
    _common(p)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("experiment", help="repeated runs, indicators and tests")
    _common(p)
    p.add_argument("--repeats", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metrics", help="indicators from saved run directories")
    p.add_argument("--reference", required=True, help="reference frontier CSV")
    p.add_argument("--out", default=None)
    p.add_argument("runs", nargs="+", help="run directories with frontier.csv and history.csv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stats", help="rank tests from an indicator table")
    p.add_argument("indicators", help="indicators CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
