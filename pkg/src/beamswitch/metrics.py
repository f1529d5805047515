"""Per-step metric accumulation and run-level summary statistics.

Thresholds follow the service model: 6 dB minimum service (reliability /
coverage / interruption crossings) and 14 dB target quality (accuracy).
The stability score composites the two quantities the reward penalizes:
mean over steps of [switch fraction + 0.1 * mean |step-to-step SNR delta|],
lower is better.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

RELIABILITY_THRESHOLD_DB = 6.0
ACCURACY_THRESHOLD_DB = 14.0
SNR_DELTA_WEIGHT = 0.1

STEP_CSV_COLUMNS = (
    "step",
    "mean_snr_db",
    "mean_throughput_mbps",
    "n_switches",
    "reliability_so_far",
    "blocked_fraction",
)


class MetricAccumulator:
    """Append-only per-step records for one run."""

    def __init__(
        self,
        n_users: int,
        reliability_threshold_db: float = RELIABILITY_THRESHOLD_DB,
        accuracy_threshold_db: float = ACCURACY_THRESHOLD_DB,
    ):
        self.n_users = n_users
        self.reliability_threshold_db = reliability_threshold_db
        self.accuracy_threshold_db = accuracy_threshold_db
        self._snr: list[np.ndarray] = []
        self._throughput: list[np.ndarray] = []
        self._switches: list[int] = []
        self._blocked: list[np.ndarray] = []

    @property
    def n_steps(self) -> int:
        return len(self._snr)

    def record_step(self, step_result):
        if len(step_result.per_user_snr_db) != self.n_users:
            raise ValueError(
                f"step carries {len(step_result.per_user_snr_db)} users, expected {self.n_users}"
            )
        self._snr.append(np.array(step_result.per_user_snr_db, dtype=np.float64))
        self._throughput.append(np.array(step_result.per_user_throughput_mbps, dtype=np.float64))
        self._switches.append(int(step_result.n_switches))
        self._blocked.append(np.array(step_result.per_user_blocked, dtype=bool))

    def snr_matrix(self) -> np.ndarray:
        return np.stack(self._snr)

    def throughput_matrix(self) -> np.ndarray:
        return np.stack(self._throughput)

    def switch_counts(self) -> np.ndarray:
        return np.array(self._switches, dtype=np.int64)

    def blocked_matrix(self) -> np.ndarray:
        return np.stack(self._blocked)

    def _require(self, min_steps: int):
        if self.n_steps < min_steps:
            raise ValueError(f"need at least {min_steps} recorded steps, have {self.n_steps}")


def reliability(acc: MetricAccumulator) -> float:
    """Fraction of (user, step) pairs at or above the 6 dB service threshold."""
    acc._require(1)
    return float(np.mean(acc.snr_matrix() >= acc.reliability_threshold_db))


def accuracy(acc: MetricAccumulator) -> float:
    """Fraction of (user, step) pairs at or above the 14 dB quality threshold."""
    acc._require(1)
    return float(np.mean(acc.snr_matrix() >= acc.accuracy_threshold_db))


def stability_score(acc: MetricAccumulator) -> float:
    """Mean over transition intervals of switch fraction + 0.1*mean |dSNR|."""
    acc._require(2)
    snr = acc.snr_matrix()
    switches = acc.switch_counts()
    deltas = np.abs(np.diff(snr, axis=0)).mean(axis=1)
    terms = switches[1:] / acc.n_users + SNR_DELTA_WEIGHT * deltas
    return float(terms.mean())


def service_interruptions(acc: MetricAccumulator) -> float:
    """Mean per-user count of downward crossings through the service threshold."""
    acc._require(2)
    snr = acc.snr_matrix()
    thr = acc.reliability_threshold_db
    crossings = (snr[:-1] >= thr) & (snr[1:] < thr)
    return float(crossings.sum(axis=0).mean())


@dataclass(frozen=True)
class RunSummary:
    mean_snr_db: float
    mean_throughput_mbps: float
    reliability_fraction: float
    accuracy_fraction: float
    coverage_fraction: float
    total_switches: int
    switch_rate_per_user_step: float
    stability_score: float
    interruptions_per_user: float
    seed: int
    agent_name: str
    config_hash: str


def summarize(acc: MetricAccumulator, seed: int, agent_name: str, config_hash: str) -> RunSummary:
    """Collapse an accumulator into the Table-I-style per-run record."""
    acc._require(2)
    rel = reliability(acc)
    total_switches = int(acc.switch_counts().sum())
    return RunSummary(
        mean_snr_db=float(acc.snr_matrix().mean()),
        mean_throughput_mbps=float(acc.throughput_matrix().mean()),
        reliability_fraction=rel,
        accuracy_fraction=accuracy(acc),
        coverage_fraction=rel,
        total_switches=total_switches,
        switch_rate_per_user_step=total_switches / (acc.n_users * acc.n_steps),
        stability_score=stability_score(acc),
        interruptions_per_user=service_interruptions(acc),
        seed=seed,
        agent_name=agent_name,
        config_hash=config_hash,
    )


# -- artifact output ----------------------------------------------------------


def write_steps_csv(acc: MetricAccumulator, path):
    """One row per recorded step."""
    snr = acc.snr_matrix()
    thr = acc.throughput_matrix()
    blocked = acc.blocked_matrix()
    switches = acc.switch_counts()
    rel_thr = acc.reliability_threshold_db
    hits = np.cumsum((snr >= rel_thr).sum(axis=1))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STEP_CSV_COLUMNS)
        for t in range(acc.n_steps):
            writer.writerow(
                [
                    t + 1,
                    repr(float(snr[t].mean())),
                    repr(float(thr[t].mean())),
                    int(switches[t]),
                    repr(float(hits[t] / ((t + 1) * acc.n_users))),
                    repr(float(blocked[t].mean())),
                ]
            )


def write_summary_json(summary: RunSummary, path):
    with open(path, "w") as fh:
        json.dump(asdict(summary), fh, indent=2)
        fh.write("\n")


LOWER_IS_BETTER = {"stability_score", "interruptions_per_user", "total_switches",
                   "switch_rate_per_user_step"}

COMPARISON_METRICS = (
    "stability_score",
    "mean_snr_db",
    "coverage_fraction",
    "interruptions_per_user",
    "mean_throughput_mbps",
    "reliability_fraction",
    "accuracy_fraction",
    "switch_rate_per_user_step",
)


def comparison_rows(summaries: list[RunSummary], metrics=COMPARISON_METRICS):
    """Per-agent mean and std over seeds for each metric, ordered by agent."""
    agents = sorted({s.agent_name for s in summaries})
    rows = []
    for agent in agents:
        runs = [s for s in summaries if s.agent_name == agent]
        row = {"agent": agent, "n_seeds": len(runs)}
        for metric in metrics:
            values = np.array([getattr(s, metric) for s in runs], dtype=np.float64)
            row[f"{metric}_mean"] = float(values.mean())
            row[f"{metric}_std"] = float(values.std())
        rows.append(row)
    return rows


def write_comparison_csv(rows, path, metrics=COMPARISON_METRICS):
    columns = ["agent", "n_seeds"]
    for metric in metrics:
        columns += [f"{metric}_mean", f"{metric}_std"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def format_comparison_text(rows, metrics=COMPARISON_METRICS) -> str:
    """Human-readable mean +/- std table, agents as columns."""
    label_w = 30
    col_w = max(20, max((len(r["agent"]) for r in rows), default=10) + 4)
    lines = ["metric".ljust(label_w) + "".join(r["agent"].rjust(col_w) for r in rows)]
    for metric in metrics:
        arrow = "v" if metric in LOWER_IS_BETTER else "^"
        cells = "".join(
            f"{r[f'{metric}_mean']:.3f} ± {r[f'{metric}_std']:.3f}".rjust(col_w) for r in rows
        )
        lines.append(f"{metric} {arrow}".ljust(label_w) + cells)
    return "\n".join(lines) + "\n"
