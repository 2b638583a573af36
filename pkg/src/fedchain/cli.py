"""Command-line experiment runner.

Subcommands mirror the experiment surface: `latency-grid` and
`accuracy-sweep` run the comparison grids and exit non-zero if any encoded
trend assertion fails; `single-round` simulates one task round; and
`validate-chain` audits an exported ledger.
"""

from __future__ import annotations

import argparse
import sys

from . import chain, experiments
from .experiments import ExperimentConfig


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    for attr in ("out_dir",):
        value = getattr(args, attr.replace("_dir", ""), None)
        if value:
            cfg.out_dir = value
    if getattr(args, "nodes", None):
        cfg.n_nodes = args.nodes
    if getattr(args, "pools", None):
        cfg.n_pools = args.pools
    if getattr(args, "modes", None):
        cfg.modes = args.modes
    if getattr(args, "alphas", None):
        cfg.alphas = args.alphas
    return cfg


def _print_checks(checks: list[tuple[str, bool, str]]) -> bool:
    ok = True
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok = ok and passed
    return ok


def cmd_latency_grid(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    rows = experiments.run_latency_grid(cfg)
    written = experiments.emit_report(cfg, cfg.out_dir, latency_rows=rows)
    for path in written:
        print(f"wrote {path}")
    return 0 if _print_checks(experiments.latency_trend_checks(rows, cfg)) else 1


def cmd_accuracy_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    rows = experiments.run_accuracy_sweep(cfg)
    written = experiments.emit_report(cfg, cfg.out_dir, sweep_rows=rows)
    for path in written:
        print(f"wrote {path}")
    return 0 if _print_checks(experiments.accuracy_trend_checks(rows, cfg)) else 1


def cmd_single_round(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    n = args.nodes[0] if args.nodes else 20
    p = args.pools[0] if args.pools else 4
    seed = args.seed if args.seed is not None else 0
    setup = experiments.build_round_setup(cfg, n, p, seed)
    ledger = chain.Chain()
    result = chain.run_round(ledger, setup, args.mode)
    print(
        f"mode={args.mode} n={n} pools={p} seed={seed} "
        f"latency_ms={result.latency_ms:.1f} winner={result.winner_pool} "
        f"accuracy={result.accuracy:.4f} block_height={result.block.height}"
    )
    violations = chain.validate_chain(ledger)
    if args.ledger:
        ledger.export_jsonl(args.ledger)
        print(f"wrote {args.ledger}")
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 1
    return 0


def cmd_validate_chain(args: argparse.Namespace) -> int:
    ledger = chain.load_chain_jsonl(args.ledger)
    violations = chain.validate_chain(ledger)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 1
    print(f"ok: {len(ledger.blocks) - 1} blocks, no violations")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedchain", description="Proof-of-useful-federated-learning simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML experiment config file")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--out", help="output directory")
        p.add_argument("--nodes", type=int, nargs="+", help="node counts")
        p.add_argument("--pools", type=int, nargs="+", help="pool counts")

    grid = sub.add_parser("latency-grid", help="latency comparison across consensus modes")
    add_common(grid)
    grid.add_argument("--modes", nargs="+", choices=chain.MODES, help="consensus modes")
    grid.set_defaults(func=cmd_latency_grid)

    sweep = sub.add_parser("accuracy-sweep", help="aggregation-scheme accuracy comparison")
    add_common(sweep)
    sweep.add_argument("--alphas", type=float, nargs="+", help="label-skew levels")
    sweep.set_defaults(func=cmd_accuracy_sweep)

    single = sub.add_parser("single-round", help="simulate one task round")
    add_common(single)
    single.add_argument("--mode", default="fedchain", choices=chain.MODES)
    single.add_argument("--ledger", help="write the ledger as JSON lines")
    single.set_defaults(func=cmd_single_round)

    validate = sub.add_parser("validate-chain", help="audit an exported ledger")
    validate.add_argument("ledger", help="ledger JSONL file")
    validate.set_defaults(func=cmd_validate_chain)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
