"""Experiment configuration: YAML parsing, validation, presets, hashing.

The config file mirrors the nested dataclasses below (sections
``scenario``, ``agent``, ``reward``, ``run``). Omitted fields take the
published-scenario defaults; unknown keys are rejected with their full
path so typos cannot silently change an experiment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .agents import DqnAgentConfig
from .env import HIGH_BLOCKAGE, BlockageParams, EnvConfig, RewardParams
from .phy import ChannelModelConfig, LinkBudget

BLOCKAGE_REGIMES = {
    "default": BlockageParams(),
    "high": HIGH_BLOCKAGE,
}

ALL_AGENTS = ("greedy", "mab", "vanilla-dqn", "proposed-dqn")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    n_users: int = 100
    n_antennas: int = 64
    n_beams: int = 64
    arena_m: float = 500.0
    carrier_freq_hz: float = 28e9
    tx_power_dbm: float = 38.0
    bandwidth_hz: float = 100e6
    noise_figure_db: float = 7.0
    bs_height_m: float = 10.0
    ue_height_m: float = 1.5
    blockage_regime: str = "default"
    blockage_attenuation_db: float = 12.0
    channel_mode: str = "rician"
    rician_k_db: float = 10.0
    antenna_spacing_wavelengths: float = 0.5
    dt_s: float = 0.01


@dataclass(frozen=True)
class AgentSettings:
    gamma: float = 0.99
    batch_size: int = 512
    target_sync_period: int = 100
    epsilon_start: float = 0.7
    epsilon_floor: float = 0.05
    epsilon_decay: float = 0.9997
    learning_rate: float = 3e-4
    buffer_capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    epsilon_priority: float = 0.01
    hidden: tuple[int, ...] = (512, 512, 256)
    dropout_rate: float = 0.15
    ucb_c: float = 2.0
    ucb_window: int | None = None


@dataclass(frozen=True)
class RewardConfig:
    w_stab: float = 2.5
    w_switch: float = 40.0
    snr_clip_db: float = 60.0
    snr_divisor: float = 8.0
    bonus: float = 3.0
    snr_threshold_db: float = 8.0


@dataclass(frozen=True)
class RunConfig:
    t_train: int = 20_000
    t_eval: int = 1_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    agents: tuple[str, ...] = ALL_AGENTS
    output_dir: str = "results"
    top_k: int | None = None
    top_k_metric: str = "stability_score"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent: AgentSettings = field(default_factory=AgentSettings)
    reward: RewardConfig = field(default_factory=RewardConfig)
    run: RunConfig = field(default_factory=RunConfig)

    # -- derived builders ---------------------------------------------------

    def blockage_params(self, regime: str | None = None) -> BlockageParams:
        name = regime if regime is not None else self.scenario.blockage_regime
        try:
            return BLOCKAGE_REGIMES[name]
        except KeyError:
            raise ConfigError(f"scenario.blockage_regime: unknown regime {name!r}") from None

    def env_config(self, regime: str | None = None) -> EnvConfig:
        s = self.scenario
        r = self.reward
        return EnvConfig(
            n_users=s.n_users,
            n_antennas=s.n_antennas,
            n_beams=s.n_beams,
            arena_m=s.arena_m,
            bs_height_m=s.bs_height_m,
            ue_height_m=s.ue_height_m,
            dt_s=s.dt_s,
            budget=LinkBudget(
                tx_power_dbm=s.tx_power_dbm,
                bandwidth_hz=s.bandwidth_hz,
                noise_figure_db=s.noise_figure_db,
                carrier_freq_hz=s.carrier_freq_hz,
                blockage_attenuation_db=s.blockage_attenuation_db,
            ),
            channel=ChannelModelConfig(
                mode=s.channel_mode,
                rician_k_db=s.rician_k_db,
                antenna_spacing_wavelengths=s.antenna_spacing_wavelengths,
            ),
            blockage=self.blockage_params(regime),
            reward=RewardParams(
                w_stab=r.w_stab,
                w_switch=r.w_switch,
                snr_clip_db=r.snr_clip_db,
                snr_divisor=r.snr_divisor,
                bonus=r.bonus,
                snr_threshold_db=r.snr_threshold_db,
            ),
        )

    def dqn_config(self, reward_variant: str) -> DqnAgentConfig:
        a = self.agent
        return DqnAgentConfig(
            gamma=a.gamma,
            batch_size=a.batch_size,
            target_sync_period=a.target_sync_period,
            epsilon_start=a.epsilon_start,
            epsilon_floor=a.epsilon_floor,
            epsilon_decay=a.epsilon_decay,
            reward_variant=reward_variant,
            learning_rate=a.learning_rate,
            buffer_capacity=a.buffer_capacity,
            per_alpha=a.per_alpha,
            per_beta_start=a.per_beta_start,
            per_beta_end=a.per_beta_end,
            epsilon_priority=a.epsilon_priority,
            hidden=tuple(a.hidden),
            dropout_rate=a.dropout_rate,
        )


def _coerce_section(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in ("hidden", "seeds", "agents") and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict | None) -> ExperimentConfig:
    """Build a validated config from a (possibly empty) nested dict."""
    data = dict(data or {})
    sections = {"scenario": ScenarioConfig, "agent": AgentSettings,
                "reward": RewardConfig, "run": RunConfig}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"top level: unknown sections {sorted(unknown)}")
    parts = {}
    for name, cls in sections.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{name}: expected a mapping")
        parts[name] = _coerce_section(cls, section, name)
    cfg = ExperimentConfig(**parts)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    s, a, run = cfg.scenario, cfg.agent, cfg.run
    checks = [
        (s.n_users >= 1, "scenario.n_users: must be >= 1"),
        (s.n_antennas >= 1, "scenario.n_antennas: must be >= 1"),
        (1 <= s.n_beams <= s.n_antennas, "scenario.n_beams: need 1 <= n_beams <= n_antennas"),
        (s.arena_m > 0, "scenario.arena_m: must be positive"),
        (s.bandwidth_hz > 0, "scenario.bandwidth_hz: must be positive"),
        (s.blockage_attenuation_db >= 0, "scenario.blockage_attenuation_db: must be >= 0"),
        (s.blockage_regime in BLOCKAGE_REGIMES, "scenario.blockage_regime: must be 'default' or 'high'"),
        (s.channel_mode in ("rician", "pure-rayleigh"), "scenario.channel_mode: must be 'rician' or 'pure-rayleigh'"),
        (s.dt_s > 0, "scenario.dt_s: must be positive"),
        (0 < a.gamma <= 1, "agent.gamma: must be in (0, 1]"),
        (a.batch_size >= 2, "agent.batch_size: must be >= 2"),
        (0 <= a.epsilon_floor <= a.epsilon_start <= 1, "agent.epsilon_start/floor: need 0 <= floor <= start <= 1"),
        (len(a.hidden) >= 1, "agent.hidden: need at least one hidden layer"),
        (run.t_train >= 0, "run.t_train: must be >= 0"),
        (run.t_eval >= 2, "run.t_eval: must be >= 2 (metrics need two steps)"),
        (len(run.seeds) >= 1, "run.seeds: must be non-empty"),
        (len(run.agents) >= 1, "run.agents: must be non-empty"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    for agent in run.agents:
        if agent not in ALL_AGENTS:
            raise ConfigError(f"run.agents: unknown agent {agent!r} (choose from {ALL_AGENTS})")
    if run.top_k is not None and run.top_k < 1:
        raise ConfigError("run.top_k: must be >= 1 when set")
    from .metrics import RunSummary

    summary_fields = {f.name for f in fields(RunSummary)}
    if run.top_k_metric not in summary_fields:
        raise ConfigError(f"run.top_k_metric: {run.top_k_metric!r} is not a RunSummary field")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data = asdict(cfg)
    for section, key in (("agent", "hidden"), ("run", "seeds"), ("run", "agents")):
        data[section][key] = list(data[section][key])
    return data


def parse_config(path) -> ExperimentConfig:
    """Load and validate a YAML experiment config."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """Short digest of the canonicalized config (key order / whitespace invariant)."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# -- presets ------------------------------------------------------------------


def paper_preset() -> ExperimentConfig:
    """The published full-scale scenario: K=100, 64 beams, 20k training steps."""
    return ExperimentConfig()


def desk_preset() -> ExperimentConfig:
    """Minutes-scale benchmark: K=10, 16 beams, reduced power and network.

    Transmit power drops to 22 dBm so the SNR distribution straddles the
    6 dB service threshold at 16 antennas (blockage must be able to cause
    outages); the network and batch shrink to keep the full 4-agent,
    3-seed benchmark within a laptop-CPU budget.
    """
    return ExperimentConfig(
        scenario=ScenarioConfig(
            n_users=10,
            n_antennas=16,
            n_beams=16,
            tx_power_dbm=22.0,
        ),
        agent=AgentSettings(
            batch_size=128,
            hidden=(128, 128, 64),
        ),
        run=RunConfig(
            t_train=5_000,
            t_eval=500,
            seeds=(0, 1, 2),
        ),
    )


PRESETS = {"paper": paper_preset, "desk": desk_preset}


# -- seeded stream derivation -------------------------------------------------


def derive_rng(seed: int, agent_name: str, role: str) -> np.random.Generator:
    """Independent stream keyed by (seed, agent, role).

    Hash-derived so adding or removing an agent never perturbs any other
    agent's draws.
    """
    digest = hashlib.sha256(f"{seed}|{agent_name}|{role}".encode()).digest()
    entropy = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
