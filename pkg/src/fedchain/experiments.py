"""Desk-scale experiment grids: latency across consensus modes, accuracy
across label-skew levels. Emits deterministic CSV tables and a markdown
report; trend expectations are encoded as checks, not read off plots.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import chain, netsim
from .data import Dataset, load_csv, make_blobs, partition_noniid, smooth_histogram
from .errors import EmptyReportError
from .fed import (
    DenseClassifier,
    TrainConfig,
    aggregate,
    evaluate,
    fedavg_weights,
    kl_weights,
    local_train,
)
from .fed import Architecture

LATENCY_COLUMNS = "mode,n_nodes,n_pools,seed,round,winner_pool,latency_ms,accuracy"
SWEEP_COLUMNS = "scheme,alpha,seed,rounds_to_target,final_accuracy"
CURVE_COLUMNS = "scheme,alpha,seed,round,accuracy"


@dataclass
class ExperimentConfig:
    modes: list[str] = field(default_factory=lambda: ["fedchain", "gfl_ring", "fedavg_central"])
    n_nodes: list[int] = field(default_factory=lambda: [20, 50])
    n_pools: list[int] = field(default_factory=lambda: [2, 5])
    alphas: list[float] = field(default_factory=lambda: [0.1, 0.8])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    target: float = 0.90
    deadline: float = 1e9
    out_dir: str = "results"
    # fixture
    n_features: int = 12
    n_classes: int = 10
    samples_per_node: int = 40
    example_size: int = 400
    held_out_size: int = 600
    separation: float = 4.0
    grid_alpha: float = 0.1
    # training
    lr: float = 0.5
    epochs: int = 1
    batch_size: int = 32
    max_rounds: int = 40
    # sweep
    sweep_miners: int = 8
    sweep_samples: int = 1600
    sweep_lr: float = 0.05
    sweep_max_rounds: int = 60
    # misc protocol knobs
    n_verifiers: int = 3
    pow_difficulty: int = 13
    pow_trial_ms: float = 1.0
    dataset_path: str | None = None  # CSV fixture instead of the synthetic blobs

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def fingerprint(self) -> str:
        body = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode()).hexdigest()[:12]

    def train_config(self, lr: float | None = None) -> TrainConfig:
        return TrainConfig(
            lr=self.lr if lr is None else lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            target=self.target,
        )


def build_task_fixture(
    cfg: ExperimentConfig, n_nodes: int, seed: int, alpha: float,
    alphas: list[float] | None = None, n_parts: int | None = None,
    slack_parts: int = 0,
) -> tuple[chain.Task, list[Dataset]]:
    """One blob population sliced into example/held-out/miner splits, so the
    training and verification data share a distribution.

    `slack_parts` extra unskewed parts are carved but not handed to miners;
    they keep the per-class pools from draining, so the miner parts realize
    their target distributions instead of exhaustion artifacts."""
    n_parts = n_parts or n_nodes
    total = cfg.example_size + cfg.held_out_size + cfg.samples_per_node * (n_parts + slack_parts)
    if cfg.dataset_path:
        full = load_csv(cfg.dataset_path)
        if len(full) < total:
            raise ValueError(
                f"fixture {cfg.dataset_path} has {len(full)} samples, need {total}"
            )
        order = np.random.default_rng(seed).permutation(len(full))[:total]
        full = full.subset(order)
    else:
        full = make_blobs(
            total, cfg.n_features, cfg.n_classes, seed=seed, separation=cfg.separation
        )
    example = full.subset(np.arange(cfg.example_size))
    held_out = full.subset(np.arange(cfg.example_size, cfg.example_size + cfg.held_out_size))
    base = full.subset(np.arange(cfg.example_size + cfg.held_out_size, total))
    if alphas is not None and slack_parts:
        alphas = list(alphas) + [0.0] * slack_parts
    parts = partition_noniid(
        base, n_parts + slack_parts, alpha=alpha, seed=seed + 1, alphas=alphas
    )[:n_parts]
    task = chain.Task(
        task_id=1,
        arch=Architecture(full.n_features, full.n_classes),
        example=example,
        held_out=held_out,
        target=cfg.target,
        deadline=cfg.deadline,
        reward=1000,
    )
    return task, parts


def build_round_setup(
    cfg: ExperimentConfig, n_nodes: int, n_pools: int, seed: int,
    aggregation: str = "kl",
) -> chain.RoundSetup:
    task, parts = build_task_fixture(cfg, n_nodes, seed=seed * 7919 + 11, alpha=cfg.grid_alpha)
    latency = netsim.build_topology(n_nodes, seed=seed * 31 + 5, model=netsim.UniformTopology(10, 100))
    compute = netsim.draw_compute_times(n_nodes, seed=seed * 17 + 3)
    return chain.RoundSetup(
        task=task,
        latency=latency,
        compute_times=compute,
        miner_data=parts,
        n_pools=n_pools,
        seed=seed,
        aggregation=aggregation,
        train=cfg.train_config(),
        max_rounds=cfg.max_rounds,
        n_verifiers=cfg.n_verifiers,
        pow_difficulty=cfg.pow_difficulty,
        pow_trial_ms=cfg.pow_trial_ms,
    )


def run_grid_cell(cfg: ExperimentConfig, mode: str, n_nodes: int, n_pools: int, seed: int) -> dict:
    """One (mode, nodes, pools, seed) cell: simulate a round, report the
    time from task publication to the accepted block."""
    setup = build_round_setup(cfg, n_nodes, n_pools, seed)
    ledger = chain.Chain()
    result = chain.run_round(ledger, setup, mode)
    assert chain.validate_chain(ledger) == []
    winner = result.outcomes[result.winner_pool] if result.outcomes else None
    rounds = len(winner.metrics) if winner else 0
    return {
        "mode": mode,
        "n_nodes": n_nodes,
        "n_pools": n_pools,
        "seed": seed,
        "round": rounds,
        "winner_pool": result.winner_pool if result.winner_pool is not None else -1,
        "latency_ms": result.latency_ms,
        "accuracy": result.accuracy,
    }


def run_latency_grid(cfg: ExperimentConfig) -> list[dict]:
    """Full (mode x nodes x pools x seeds) grid. Baseline modes do not depend
    on the pool count, so their cells are computed once per (n, seed) and
    reused; infeasible pool counts are skipped with a warning row."""
    rows: list[dict] = []
    baseline_cache: dict[tuple[str, int, int], dict] = {}
    for mode in cfg.modes:
        for n in cfg.n_nodes:
            for p in cfg.n_pools:
                for seed in cfg.seeds:
                    if p > n:
                        warnings.warn(f"skipping infeasible cell: {p} pools > {n} nodes")
                        continue
                    if mode != "fedchain":
                        key = (mode, n, seed)
                        if key in baseline_cache:
                            row = dict(baseline_cache[key])
                            row["n_pools"] = p
                        else:
                            row = run_grid_cell(cfg, mode, n, p, seed)
                            baseline_cache[key] = row
                    else:
                        row = run_grid_cell(cfg, mode, n, p, seed)
                    rows.append(row)
    return rows


def latency_rows_to_csv(rows: list[dict]) -> str:
    lines = [LATENCY_COLUMNS]
    for r in rows:
        lines.append(
            f"{r['mode']},{r['n_nodes']},{r['n_pools']},{r['seed']},{r['round']},"
            f"{r['winner_pool']},{r['latency_ms']:.6f},{r['accuracy']:.6f}"
        )
    return "\n".join(lines) + "\n"


def _mean_latency(rows: list[dict], **filters) -> float:
    vals = [
        r["latency_ms"]
        for r in rows
        if all(r[k] == v for k, v in filters.items())
    ]
    return float(np.mean(vals)) if vals else float("nan")


def latency_trend_checks(rows: list[dict], cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    """Encoded expectations: pooled decentralized training beats the
    whole-network ring and the centralized coordinator; more pools means
    lower latency; the coordinator's latency grows with node count."""
    checks: list[tuple[str, bool, str]] = []
    n_cmp = 50 if 50 in cfg.n_nodes else max(cfg.n_nodes)
    p_cmp = 5 if 5 in cfg.n_pools else cfg.n_pools[0]
    fc = _mean_latency(rows, mode="fedchain", n_nodes=n_cmp, n_pools=p_cmp)
    for rival in ("gfl_ring", "fedavg_central"):
        if rival in cfg.modes:
            other = _mean_latency(rows, mode=rival, n_nodes=n_cmp, n_pools=p_cmp)
            checks.append(
                (
                    f"fedchain_below_{rival}",
                    bool(fc < other),
                    f"fedchain {fc:.1f} ms vs {rival} {other:.1f} ms at n={n_cmp}, pools={p_cmp}",
                )
            )
    pool_levels = sorted(p for p in cfg.n_pools if p <= n_cmp)
    if len(pool_levels) >= 2 and "fedchain" in cfg.modes:
        means = [_mean_latency(rows, mode="fedchain", n_nodes=n_cmp, n_pools=p) for p in pool_levels]
        decreasing = all(a > b for a, b in zip(means, means[1:]))
        checks.append(
            (
                "fedchain_latency_decreases_with_pools",
                bool(decreasing),
                f"pools {pool_levels} -> {['%.1f' % m for m in means]} ms at n={n_cmp}",
            )
        )
    if "fedavg_central" in cfg.modes and len(cfg.n_nodes) >= 2:
        node_levels = sorted(cfg.n_nodes)
        means = [
            _mean_latency(rows, mode="fedavg_central", n_nodes=n, n_pools=cfg.n_pools[0])
            for n in node_levels
        ]
        increasing = all(a < b for a, b in zip(means, means[1:]))
        checks.append(
            (
                "fedavg_central_latency_grows_with_nodes",
                bool(increasing),
                f"nodes {node_levels} -> {['%.1f' % m for m in means]} ms",
            )
        )
    return checks


def run_sweep_cell(cfg: ExperimentConfig, scheme: str, alpha: float, seed: int) -> dict:
    """One aggregation-scheme comparison cell: a single pool of miners,
    half holding data skewed to the sweep's alpha and half holding iid data,
    trained to the accuracy target.

    Heterogeneous divergence across miners is the regime where divergence
    weighting and size weighting actually differ; with every miner skewed
    alike the two schemes coincide. Slack parts keep the skewed draws from
    draining the class pools, so the iid miners stay genuinely iid.
    """
    m = cfg.sweep_miners
    grades = [alpha if j < m // 2 else 0.0 for j in range(m)]
    fixture_cfg = replace(
        cfg, samples_per_node=max(1, cfg.sweep_samples // m)
    )
    task, parts = build_task_fixture(
        fixture_cfg, m, seed=seed * 104729 + 7, alpha=alpha, alphas=grades, n_parts=m,
        slack_parts=m,
    )
    sizes = [len(p) for p in parts]
    if scheme == "fedavg":
        weights = fedavg_weights(sizes)
    else:
        reference = smooth_histogram(task.example.histogram())
        hists = [smooth_histogram(p.histogram()) for p in parts]
        weights = kl_weights(hists, reference, sizes)

    train_cfg = TrainConfig(
        lr=cfg.sweep_lr, epochs=cfg.epochs, batch_size=cfg.batch_size, target=cfg.target
    )
    model = DenseClassifier(task.arch, seed=seed)
    curve: list[float] = []
    rounds_to_target = cfg.sweep_max_rounds + 1
    for round_idx in range(cfg.sweep_max_rounds):
        trained = [
            local_train(model, parts[j], train_cfg, seed=seed * 1009 + round_idx * 97 + j)
            for j in range(m)
        ]
        model = model.clone(aggregate([t.weights for t in trained], weights))
        acc = evaluate(model, task.example)
        curve.append(acc)
        if acc >= cfg.target and rounds_to_target > cfg.sweep_max_rounds:
            rounds_to_target = round_idx + 1
            break
    return {
        "scheme": scheme,
        "alpha": alpha,
        "seed": seed,
        "rounds_to_target": rounds_to_target,
        "final_accuracy": curve[-1],
        "curve": curve,
    }


def run_accuracy_sweep(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for scheme in ("fedavg", "kl"):
        for alpha in cfg.alphas:
            for seed in cfg.seeds:
                rows.append(run_sweep_cell(cfg, scheme, alpha, seed))
    return rows


def sweep_rows_to_csv(rows: list[dict]) -> str:
    lines = [SWEEP_COLUMNS]
    for r in rows:
        lines.append(
            f"{r['scheme']},{r['alpha']:.2f},{r['seed']},{r['rounds_to_target']},"
            f"{r['final_accuracy']:.6f}"
        )
    return "\n".join(lines) + "\n"


def curve_rows_to_csv(rows: list[dict]) -> str:
    lines = [CURVE_COLUMNS]
    for r in rows:
        for idx, acc in enumerate(r["curve"]):
            lines.append(f"{r['scheme']},{r['alpha']:.2f},{r['seed']},{idx},{acc:.6f}")
    return "\n".join(lines) + "\n"


def accuracy_trend_checks(rows: list[dict], cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    """Encoded expectations: divergence weighting converges faster than size
    weighting under strong skew, and matches it under weak skew."""
    checks: list[tuple[str, bool, str]] = []
    lo, hi = min(cfg.alphas), max(cfg.alphas)

    def rounds(scheme, alpha):
        return [r["rounds_to_target"] for r in rows if r["scheme"] == scheme and r["alpha"] == alpha]

    def finals(scheme, alpha):
        return [r["final_accuracy"] for r in rows if r["scheme"] == scheme and r["alpha"] == alpha]

    kl_hi, fa_hi = np.median(rounds("kl", hi)), np.median(rounds("fedavg", hi))
    checks.append(
        (
            "kl_faster_under_strong_skew",
            bool(kl_hi < fa_hi),
            f"median rounds to target at alpha={hi}: kl {kl_hi} vs fedavg {fa_hi}",
        )
    )
    kl_lo, fa_lo = np.array(finals("kl", lo)), np.array(finals("fedavg", lo))
    pooled_sd = float(np.sqrt((kl_lo.std(ddof=1) ** 2 + fa_lo.std(ddof=1) ** 2) / 2))
    gap = abs(float(kl_lo.mean() - fa_lo.mean()))
    checks.append(
        (
            "schemes_match_under_weak_skew",
            bool(gap <= 2 * pooled_sd + 1e-9),
            f"|acc gap| {gap:.4f} vs 2 x pooled sd {2 * pooled_sd:.4f} at alpha={lo}",
        )
    )
    return checks


def emit_report(
    cfg: ExperimentConfig,
    out_dir: str,
    latency_rows: list[dict] | None = None,
    sweep_rows: list[dict] | None = None,
) -> list[str]:
    """Write CSV artifacts plus a markdown summary; returns written paths.

    Identical inputs produce byte-identical files (the config fingerprint is
    embedded so runs can be reproduced)."""
    if not latency_rows and not sweep_rows:
        raise EmptyReportError("no run records to report")
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    report_lines = [
        "# Experiment report",
        "",
        f"Config fingerprint: `{cfg.fingerprint()}`",
        "",
    ]
    if latency_rows:
        path = os.path.join(out_dir, "latency_grid.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(latency_rows_to_csv(latency_rows))
        written.append(path)
        report_lines += ["## Latency grid", ""]
        for name, ok, detail in latency_trend_checks(latency_rows, cfg):
            report_lines.append(f"- {'PASS' if ok else 'FAIL'} {name}: {detail}")
        report_lines.append("")
    if sweep_rows:
        path = os.path.join(out_dir, "accuracy_sweep.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(sweep_rows_to_csv(sweep_rows))
        written.append(path)
        path = os.path.join(out_dir, "accuracy_curves.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(curve_rows_to_csv(sweep_rows))
        written.append(path)
        report_lines += ["## Accuracy sweep", ""]
        for name, ok, detail in accuracy_trend_checks(sweep_rows, cfg):
            report_lines.append(f"- {'PASS' if ok else 'FAIL'} {name}: {detail}")
        report_lines.append("")
    report_path = os.path.join(out_dir, "report.md")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report_lines))
    written.append(report_path)
    return written
