"""Command-line entry point.

Subcommands:
  run       full experiment (train + evaluate all agents over all seeds)
  eval      evaluate a saved checkpoint, no training
  bench     inference-latency benchmark for one decision step
  sweep     run the experiment under both blockage regimes
  selftest  fast invariant suite (seconds)

Worker parallelism for run/sweep comes from the BEAMSWITCH_WORKERS
environment variable (default 1).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

import numpy as np

from . import runner
from .config import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    parse_config,
)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip() != "")


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip() != "")


def load_experiment_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
    else:
        cfg = PRESETS[args.preset]()
    run_updates = {}
    if getattr(args, "seeds", None):
        run_updates["seeds"] = _parse_int_list(args.seeds)
    if getattr(args, "agents", None):
        run_updates["agents"] = _parse_str_list(args.agents)
    if getattr(args, "out", None):
        run_updates["output_dir"] = args.out
    if run_updates:
        cfg = replace(cfg, run=replace(cfg.run, **run_updates))
    from .config import validate_config

    validate_config(cfg)
    return cfg


def _add_config_args(parser):
    parser.add_argument("--config", help="YAML experiment config (overrides --preset)")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2")
    parser.add_argument("--agents", help="comma-separated agent list")


def cmd_run(args) -> int:
    cfg = load_experiment_config(args)
    summaries, manifest = runner.run_experiment(cfg)
    failures = [r for r in manifest["runs"] if r["status"] != "ok"]
    print(f"completed {len(summaries)} runs, {len(failures)} failed; "
          f"artifacts in {cfg.run.output_dir}")
    if summaries:
        from .metrics import comparison_rows, format_comparison_text

        print(format_comparison_text(comparison_rows(summaries)))
    for fail in failures:
        print(f"FAILED {fail['agent']} seed {fail['seed']}: {fail['error'].splitlines()[0]}",
              file=sys.stderr)
    return 1 if failures else 0


def cmd_eval(args) -> int:
    cfg = load_experiment_config(args)
    summary = runner.evaluate_checkpoint(
        cfg, args.checkpoint, agent_name=args.agent, seed=args.seed,
    )
    print(json.dumps(asdict(summary), indent=2))
    return 0


def cmd_bench(args) -> int:
    cfg = load_experiment_config(args)
    stats = runner.benchmark_inference(cfg, n_repeats=args.repeats)
    print(json.dumps(stats, indent=2))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_experiment_config(args)
    results = runner.sweep_blockage(cfg)
    ok = all(len(s) for s in results.values())
    for regime, summaries in results.items():
        print(f"regime {regime}: {len(summaries)} runs summarized")
    return 0 if ok else 1


def cmd_selftest(args) -> int:
    from .env import BlockageParams, RewardParams, blockage_step, compute_reward, f_snr
    from .neural import (
        DuelingQNetwork,
        finite_difference_gradients,
        max_relative_gradient_error,
        weighted_td_loss,
    )
    from .phy import make_dft_codebook, throughput_mbps
    from .replay import SumTree

    failures = []

    def check(name: str, ok: bool, detail: str = ""):
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    cb = make_dft_codebook(64)
    gram_err = float(np.abs(cb.gram() - np.eye(64)).max())
    check("codebook unitarity", gram_err < 1e-9, f"max |G-I| = {gram_err:.2e}")

    rng = np.random.default_rng(7)
    params = BlockageParams()
    blocked = np.zeros(200, dtype=bool)
    hits = 0
    steps = 1000
    for _ in range(steps):
        blocked = np.array([blockage_step(b, params, rng) for b in blocked])
        hits += int(blocked.sum())
    frac = hits / (steps * blocked.size)
    target = params.stationary_blocked_fraction()
    check("blockage stationarity", abs(frac - target) < 0.01,
          f"empirical {frac:.4f} vs {target:.4f}")

    rp = RewardParams()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(500):
        now, prev = rng.uniform(-20, 80, 2)
        switches = int(rng.integers(0, 101))
        expected = (
            min(now, 60.0) / 8.0
            + (3.0 if now > 8.0 else 0.0)
            - 2.5 * abs(now - prev)
            - 40.0 * switches / 100.0
        )
        worst = max(worst, abs(compute_reward(now, prev, switches, 100, rp) - expected))
    check("reward oracle", worst < 1e-12, f"max dev {worst:.2e}")

    tree = SumTree(64)
    rng = np.random.default_rng(3)
    for i in range(200):
        tree.add(float(rng.uniform(0.1, 5.0)), i)
    for _ in range(2000):
        tree.set_many(rng.integers(0, 64, 8), rng.uniform(0.1, 5.0, 8))
    root_err = abs(tree.total - tree.leaf_values().sum())
    check("sum-tree consistency", root_err < 1e-6 * max(tree.total, 1.0),
          f"|root - sum(leaves)| = {root_err:.2e}")

    rng = np.random.default_rng(5)
    net = DuelingQNetwork(n_inputs=4, hidden=(8, 8), n_actions=4, dropout_rate=0.0, rng=rng)
    x = rng.standard_normal((6, 4))
    actions = rng.integers(0, 4, 6)
    targets = rng.standard_normal(6)
    weights = rng.uniform(0.5, 1.0, 6)
    weighted_td_loss(net, x, actions, targets, weights, mode="frozen")
    net.forward(x, mode="frozen")
    analytic, _ = net.backward(actions, targets, weights)
    numeric = finite_difference_gradients(net, x, actions, targets, weights, mode="frozen")
    err = max_relative_gradient_error(analytic, numeric)
    check("gradient check (small net)", err < 1e-4, f"max rel err {err:.2e}")

    snrs = np.linspace(-40, 40, 200)
    thr = np.array([throughput_mbps(s, 100e6) for s in snrs])
    check("throughput monotonic", bool(np.all(np.diff(thr) > 0)))
    check("f_snr worked values",
          f_snr(16.0, rp) == 5.0 and f_snr(8.0, rp) == 1.0 and f_snr(100.0, rp) == 10.5)

    print(f"\n{len(failures)} failure(s)")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamswitch",
        description="Adaptive beam-switching simulator and online-learning benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and evaluate all configured agents")
    _add_config_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_config_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--agent", default="proposed-dqn")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="inference-latency benchmark")
    _add_config_args(p_bench)
    p_bench.add_argument("--repeats", type=int, default=100)
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="compare blockage regimes")
    _add_config_args(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_self = sub.add_parser("selftest", help="fast invariant suite")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
