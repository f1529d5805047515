"""Experiment orchestration: seeded multi-run train/evaluate cycles.

Each (agent, seed) run is fully isolated: its environment, network
initialization, exploration and sampling streams are all hash-derived
from (seed, agent, role), so runs can execute in any order or in
parallel workers without perturbing one another. Summary artifacts
contain no timestamps and are byte-reproducible; the manifest carries
the wall-clock metadata.
"""

from __future__ import annotations

import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .agents import (
    DqnPolicy,
    GreedyPolicy,
    UcbPolicy,
    evaluate,
    train_loop,
    train_ucb,
)
from .bandit import UcbState
from .config import ExperimentConfig, config_hash, config_to_dict, derive_rng
from .env import Environment
from .metrics import (
    LOWER_IS_BETTER,
    MetricAccumulator,
    RunSummary,
    comparison_rows,
    format_comparison_text,
    write_comparison_csv,
    write_steps_csv,
    write_summary_json,
)
from .neural import DuelingQNetwork, load_checkpoint, save_checkpoint

ARTIFACT_FORMAT_VERSION = 1
WORKERS_ENV_VAR = "BEAMSWITCH_WORKERS"

SUMMARIES_FILE = "summaries.json"
COMPARISON_CSV = "comparison.csv"
COMPARISON_TXT = "comparison.txt"
MANIFEST_FILE = "manifest.json"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV_VAR, "1")))
    except ValueError:
        return 1


def run_single(
    cfg: ExperimentConfig,
    agent_name: str,
    seed: int,
    run_dir: Path,
    regime: str | None = None,
) -> RunSummary:
    """Train (if the agent learns) and evaluate one (agent, seed) pair."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    env_cfg = cfg.env_config(regime)
    t_train = cfg.run.t_train

    if agent_name == "greedy":
        policy = GreedyPolicy()
    elif agent_name == "mab":
        env_train = Environment(env_cfg, derive_rng(seed, agent_name, "env-train"))
        state = UcbState(
            env_cfg.n_users, env_cfg.n_beams, c=cfg.agent.ucb_c, window=cfg.agent.ucb_window
        )
        train_ucb(env_train, state, t_train)
        policy = UcbPolicy(state)
    elif agent_name in ("vanilla-dqn", "proposed-dqn"):
        variant = "vanilla" if agent_name == "vanilla-dqn" else "stability-aware"
        env_train = Environment(env_cfg, derive_rng(seed, agent_name, "env-train"))
        agent, _ = train_loop(
            env_train,
            cfg.dqn_config(variant),
            t_train,
            seed,
            agent_name=agent_name,
            log_path=run_dir / "training_log.csv",
        )
        save_checkpoint(run_dir / "checkpoint.npz", agent.online, agent.adam)
        policy = DqnPolicy(agent.online, agent_name)
    else:
        raise ValueError(f"unknown agent {agent_name!r}")

    env_eval = Environment(env_cfg, derive_rng(seed, agent_name, "env-eval"))
    acc = MetricAccumulator(env_cfg.n_users)
    summary = evaluate(
        env_eval, policy, cfg.run.t_eval,
        seed=seed, agent_name=agent_name, config_hash=chash, accumulator=acc,
    )
    write_steps_csv(acc, run_dir / "steps.csv")
    write_summary_json(summary, run_dir / "summary.json")
    return summary


def _run_single_task(args):
    cfg_dict, agent_name, seed, run_dir, regime = args
    from .config import config_from_dict

    cfg = config_from_dict(cfg_dict)
    return run_single(cfg, agent_name, seed, Path(run_dir), regime)


def top_k_filter(summaries: list[RunSummary], k: int, metric: str) -> list[RunSummary]:
    """Keep each agent's k best runs under the (direction-aware) ranking metric."""
    kept: list[RunSummary] = []
    for agent in sorted({s.agent_name for s in summaries}):
        runs = [s for s in summaries if s.agent_name == agent]
        runs.sort(key=lambda s: getattr(s, metric), reverse=metric not in LOWER_IS_BETTER)
        kept.extend(runs[:k])
    return kept


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    regime: str | None = None,
):
    """Execute every (seed x agent) run, write artifacts, return (summaries, manifest).

    Individual run failures are recorded in the manifest without aborting
    sibling runs.
    """
    out = Path(out_dir if out_dir is not None else cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    manifest = {
        "artifact_format_version": ARTIFACT_FORMAT_VERSION,
        "config_hash": chash,
        "blockage_regime": regime if regime is not None else cfg.scenario.blockage_regime,
        "created_unix": time.time(),
        "config": config_to_dict(cfg),
        "runs": [],
        "outputs": {},
    }

    tasks = []
    for seed in cfg.run.seeds:
        for agent_name in cfg.run.agents:
            run_dir = out / f"{agent_name}_seed{seed}"
            tasks.append((agent_name, seed, run_dir))

    summaries: list[RunSummary] = []
    n_workers = worker_count()
    if n_workers > 1:
        cfg_dict = config_to_dict(cfg)
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {
                pool.submit(_run_single_task, (cfg_dict, a, s, str(d), regime)): (a, s, d)
                for a, s, d in tasks
            }
            results = {}
            for fut, key in futures.items():
                try:
                    results[key] = ("ok", fut.result())
                except Exception as exc:  # noqa: BLE001 - isolate sibling runs
                    results[key] = ("failed", f"{exc}\n{traceback.format_exc()}")
        outcomes = [(a, s, d, *results[(a, s, d)]) for a, s, d in tasks]
    else:
        outcomes = []
        for agent_name, seed, run_dir in tasks:
            try:
                outcomes.append((agent_name, seed, run_dir, "ok", run_single(cfg, agent_name, seed, run_dir, regime)))
            except Exception as exc:  # noqa: BLE001 - isolate sibling runs
                outcomes.append((agent_name, seed, run_dir, "failed", f"{exc}\n{traceback.format_exc()}"))

    for agent_name, seed, run_dir, status, payload in outcomes:
        entry = {
            "agent": agent_name,
            "seed": seed,
            "dir": str(run_dir),
            "status": status,
        }
        if status == "ok":
            summaries.append(payload)
            entry["files"] = sorted(p.name for p in Path(run_dir).iterdir())
        else:
            entry["error"] = payload
        manifest["runs"].append(entry)

    summaries.sort(key=lambda s: (s.agent_name, s.seed))
    with open(out / SUMMARIES_FILE, "w") as fh:
        json.dump([asdict(s) for s in summaries], fh, indent=2)
        fh.write("\n")
    manifest["outputs"]["summaries"] = str(out / SUMMARIES_FILE)

    if summaries:
        rows = comparison_rows(summaries)
        write_comparison_csv(rows, out / COMPARISON_CSV)
        text = format_comparison_text(rows)
        if cfg.run.top_k is not None:
            filtered = top_k_filter(summaries, cfg.run.top_k, cfg.run.top_k_metric)
            top_rows = comparison_rows(filtered)
            write_comparison_csv(top_rows, out / "comparison_topk.csv")
            text += (
                f"\ntop-{cfg.run.top_k} runs per agent by {cfg.run.top_k_metric}:\n"
                + format_comparison_text(top_rows)
            )
            manifest["outputs"]["comparison_topk_csv"] = str(out / "comparison_topk.csv")
        (out / COMPARISON_TXT).write_text(text)
        manifest["outputs"]["comparison_csv"] = str(out / COMPARISON_CSV)
        manifest["outputs"]["comparison_txt"] = str(out / COMPARISON_TXT)

    with open(out / MANIFEST_FILE, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return summaries, manifest


def sweep_blockage(cfg: ExperimentConfig, out_dir=None):
    """run_experiment under both blockage regimes; side-by-side summary."""
    out = Path(out_dir if out_dir is not None else cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for regime in ("default", "high"):
        regime_cfg = replace(cfg, scenario=replace(cfg.scenario, blockage_regime=regime))
        summaries, _ = run_experiment(regime_cfg, out / regime, regime=regime)
        results[regime] = summaries
    sweep = {
        "regimes": {
            regime: {
                "comparison": comparison_rows(summaries),
                "summaries": [asdict(s) for s in summaries],
            }
            for regime, summaries in results.items()
        }
    }
    with open(out / "sweep_summary.json", "w") as fh:
        json.dump(sweep, fh, indent=2)
        fh.write("\n")
    return results


def benchmark_inference(cfg: ExperimentConfig, n_repeats: int = 100) -> dict:
    """Wall-clock latency of one full decision step (all K users, eval mode)."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    s = cfg.scenario
    net = DuelingQNetwork(
        n_inputs=8, hidden=tuple(cfg.agent.hidden), n_actions=s.n_beams,
        dropout_rate=cfg.agent.dropout_rate, rng=derive_rng(0, "bench", "net-init"),
    )
    rng = derive_rng(0, "bench", "obs")
    obs = rng.random((s.n_users, 8))
    for _ in range(3):  # warmup
        np.argmax(net.forward(obs, mode="eval"), axis=1)
    times_ms = np.empty(n_repeats)
    for i in range(n_repeats):
        t0 = time.perf_counter()
        np.argmax(net.forward(obs, mode="eval"), axis=1)
        times_ms[i] = (time.perf_counter() - t0) * 1e3
    return {
        "n_users": s.n_users,
        "n_beams": s.n_beams,
        "n_repeats": n_repeats,
        "mean_ms": float(times_ms.mean()),
        "median_ms": float(np.median(times_ms)),
        "p99_ms": float(np.percentile(times_ms, 99)),
        "min_ms": float(times_ms.min()),
        "max_ms": float(times_ms.max()),
    }


def evaluate_checkpoint(
    cfg: ExperimentConfig,
    checkpoint_path,
    agent_name: str = "proposed-dqn",
    seed: int = 0,
    regime: str | None = None,
) -> RunSummary:
    """Load a trained network and run the evaluation phase only."""
    net, _ = load_checkpoint(checkpoint_path)
    env = Environment(cfg.env_config(regime), derive_rng(seed, agent_name, "env-eval"))
    policy = DqnPolicy(net, agent_name)
    return evaluate(
        env, policy, cfg.run.t_eval,
        seed=seed, agent_name=agent_name, config_hash=config_hash(cfg),
    )
