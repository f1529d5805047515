"""Multi-user beam-switching decision environment.

One ``Environment`` holds K mobile users around a centered base station:
random-waypoint mobility, a per-user two-state blockage Markov chain,
block fading redrawn every step, the 8-feature observation builder and
the stability-aware reward.

Timing model: the channel (fading, blockage, positions) visible through
``observations()`` / ``oracle_snr_table()`` is the one the *next*
``step()`` call evaluates actions against; the state advances at the end
of each step. Decisions therefore act within the coherence block they
observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phy import (
    ChannelModelConfig,
    Codebook,
    LinkBudget,
    SNR_FLOOR_DB,
    heuristic_beam_index,
    make_dft_codebook,
    path_loss_umi_db,
    sample_fading,
    throughput_mbps,
)

BLOCKAGE_HISTORY_LEN = 5
SNR_HISTORY_LEN = 3
OBS_DIM = 8
OBS_SNR_MAX_DB = 60.0
OBS_TREND_DIVISOR_DB = 20.0
OBS_PERSISTENCE_CAP = 50


@dataclass(frozen=True)
class BlockageParams:
    """Two-state Markov chain: P(stay blocked), P(become blocked)."""

    p_stay_blocked: float = 0.25
    p_become_blocked: float = 0.08

    def __post_init__(self):
        for name in ("p_stay_blocked", "p_become_blocked"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    def stationary_blocked_fraction(self) -> float:
        denom = self.p_become_blocked + 1.0 - self.p_stay_blocked
        if denom == 0.0:  # absorbing unblocked chain started blocked is degenerate
            return 1.0
        return self.p_become_blocked / denom


HIGH_BLOCKAGE = BlockageParams(p_stay_blocked=0.90, p_become_blocked=0.10)


@dataclass(frozen=True)
class RewardParams:
    """Weights of the stability-aware reward."""

    w_stab: float = 2.5
    w_switch: float = 40.0
    snr_clip_db: float = 60.0
    snr_divisor: float = 8.0
    bonus: float = 3.0
    snr_threshold_db: float = 8.0

    def __post_init__(self):
        for name in ("w_stab", "w_switch", "snr_clip_db", "snr_divisor", "bonus", "snr_threshold_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class UserState:
    position: np.ndarray
    velocity: np.ndarray
    waypoint: np.ndarray
    angle_rad: float
    blocked: bool = False
    blockage_history: np.ndarray = field(
        default_factory=lambda: np.zeros(BLOCKAGE_HISTORY_LEN)
    )
    snr_history_db: np.ndarray = field(default_factory=lambda: np.zeros(SNR_HISTORY_LEN))
    current_beam: int = -1  # -1 = no beam assigned yet
    beam_persistence: int = 0
    prev_snr_db: float = 0.0

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass
class StepResult:
    per_user_snr_db: np.ndarray
    per_user_reward: np.ndarray
    n_switches: int
    per_user_blocked: np.ndarray
    per_user_throughput_mbps: np.ndarray


@dataclass(frozen=True)
class EnvConfig:
    n_users: int = 100
    n_antennas: int = 64
    n_beams: int = 64
    arena_m: float = 500.0
    bs_height_m: float = 10.0
    ue_height_m: float = 1.5
    min_bs_distance_m: float = 5.0
    dt_s: float = 0.01
    speed_min_mps: float = 1.0
    speed_max_mps: float = 20.0
    budget: LinkBudget = field(default_factory=LinkBudget)
    channel: ChannelModelConfig = field(default_factory=ChannelModelConfig)
    blockage: BlockageParams = field(default_factory=BlockageParams)
    reward: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if not 1 <= self.n_beams <= self.n_antennas:
            raise ValueError("need 1 <= n_beams <= n_antennas for a DFT codebook")

    @property
    def bs_xy(self) -> np.ndarray:
        return np.array([self.arena_m / 2.0, self.arena_m / 2.0])


def broadside_angle(position: np.ndarray, bs_xy: np.ndarray) -> float:
    """Angle of the user off array broadside (broadside along +x), in [-pi/2, pi/2].

    A ULA along y only resolves sin(theta); front/back aliases map onto the
    representative with the same sine.
    """
    d = position - bs_xy
    return math.asin(math.sin(math.atan2(d[1], d[0])))


def mobility_step(
    user: UserState,
    dt: float,
    rng: np.random.Generator,
    arena_m: float = 500.0,
    bs_xy: np.ndarray | None = None,
    speed_min: float = 1.0,
    speed_max: float = 20.0,
) -> UserState:
    """Random-waypoint update, mutating ``user`` in place and returning it.

    Moves toward the waypoint at the current speed; on arrival draws a new
    uniform waypoint and a new speed ~ U[speed_min, speed_max].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if bs_xy is None:
        bs_xy = np.array([arena_m / 2.0, arena_m / 2.0])
    speed = user.speed
    to_wp = user.waypoint - user.position
    dist = float(np.linalg.norm(to_wp))
    step_len = speed * dt
    if dist <= step_len:
        user.position = user.waypoint.copy()
        user.waypoint = rng.uniform(0.0, arena_m, size=2)
        speed = float(rng.uniform(speed_min, speed_max))
        to_wp = user.waypoint - user.position
        dist = float(np.linalg.norm(to_wp))
    else:
        user.position = user.position + (step_len / dist) * to_wp
    if dist > 0:
        user.velocity = speed * to_wp / dist
    user.angle_rad = broadside_angle(user.position, bs_xy)
    return user


def blockage_step(blocked: bool, params: BlockageParams, rng: np.random.Generator) -> bool:
    """One Markov transition of the direct-path blockage state."""
    u = rng.random()
    if blocked:
        return u < params.p_stay_blocked
    return u < params.p_become_blocked


def build_observation(user: UserState, config: EnvConfig) -> np.ndarray:
    """8-feature agent input for one user.

    [angle/(pi/2), distance/arena, clamp(prev_snr,0,60)/60, blocked,
     mean(blockage history), clamp(snr_trend/20 + 0.5, 0, 1),
     min(persistence,50)/50, speed/speed_max]
    """
    dist = float(np.linalg.norm(user.position - config.bs_xy))
    trend = (user.snr_history_db[-1] - user.snr_history_db[0]) / OBS_TREND_DIVISOR_DB + 0.5
    return np.array(
        [
            user.angle_rad / (np.pi / 2.0),
            dist / config.arena_m,
            min(max(user.prev_snr_db, 0.0), OBS_SNR_MAX_DB) / OBS_SNR_MAX_DB,
            1.0 if user.blocked else 0.0,
            float(np.mean(user.blockage_history)),
            min(max(trend, 0.0), 1.0),
            min(user.beam_persistence, OBS_PERSISTENCE_CAP) / OBS_PERSISTENCE_CAP,
            user.speed / config.speed_max_mps,
        ]
    )


def f_snr(snr_db_value: float, params: RewardParams) -> float:
    """Clipped linear SNR utility with a bonus above the service threshold.

    min(snr, clip)/divisor + bonus * [snr > threshold]  (strict inequality:
    boundary equality earns no bonus).
    """
    value = min(snr_db_value, params.snr_clip_db) / params.snr_divisor
    if snr_db_value > params.snr_threshold_db:
        value += params.bonus
    return value


def compute_reward(
    snr_now_db: float,
    snr_prev_db: float,
    n_switches: int,
    k_users: int,
    params: RewardParams,
) -> float:
    """Per-user reward: SNR utility minus fluctuation and shared switch penalties."""
    if k_users < 1:
        raise ValueError("k_users must be >= 1")
    return (
        f_snr(snr_now_db, params)
        - params.w_stab * abs(snr_now_db - snr_prev_db)
        - params.w_switch * (n_switches / k_users)
    )


class Environment:
    """K-user beam-switching environment; single-threaded, seeded."""

    def __init__(self, config: EnvConfig, seed: int | np.random.Generator = 0):
        self.config = config
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.codebook: Codebook = make_dft_codebook(config.n_antennas, config.n_beams)
        self.budget = config.budget
        self.users: list[UserState] = []
        self.step_count = 0
        k = config.n_users
        self.h_eff = np.zeros((k, config.n_antennas), dtype=np.complex128)
        self.heuristic_beams = np.zeros(k, dtype=np.int64)
        self._init_users()
        for i in range(k):
            self._redraw_channel(i)

    # -- setup -------------------------------------------------------------

    def _init_users(self):
        cfg = self.config
        bs = cfg.bs_xy
        for _ in range(cfg.n_users):
            while True:
                pos = self.rng.uniform(0.0, cfg.arena_m, size=2)
                if np.linalg.norm(pos - bs) >= cfg.min_bs_distance_m:
                    break
            waypoint = self.rng.uniform(0.0, cfg.arena_m, size=2)
            speed = float(self.rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps))
            to_wp = waypoint - pos
            dist = float(np.linalg.norm(to_wp))
            velocity = speed * to_wp / dist if dist > 0 else np.array([speed, 0.0])
            self.users.append(
                UserState(
                    position=pos,
                    velocity=velocity,
                    waypoint=waypoint,
                    angle_rad=broadside_angle(pos, bs),
                )
            )

    def _redraw_channel(self, i: int):
        cfg = self.config
        user = self.users[i]
        h = sample_fading(self.rng, cfg.channel, user.angle_rad, cfg.n_antennas)
        dist = float(np.linalg.norm(user.position - cfg.bs_xy))
        pl = path_loss_umi_db(dist, cfg.bs_height_m, cfg.ue_height_m, cfg.budget.carrier_freq_hz)
        self.h_eff[i] = math.sqrt(10.0 ** (-pl / 10.0)) * h
        self.heuristic_beams[i] = heuristic_beam_index(
            user.angle_rad, self.codebook, cfg.channel.antenna_spacing_wavelengths
        )

    # -- queries (pure reads) ---------------------------------------------

    def observations(self) -> np.ndarray:
        return np.stack([build_observation(u, self.config) for u in self.users])

    def _snr_row(self, i: int, apply_blockage: bool = True) -> np.ndarray:
        """SNR in dB for user i under every beam, at the current channel state."""
        gains = np.abs(self.codebook.beams.conj() @ self.h_eff[i]) ** 2
        row = np.full(self.config.n_beams, SNR_FLOOR_DB)
        nz = gains > 0.0
        row[nz] = self.budget.tx_power_dbm + 10.0 * np.log10(gains[nz]) - self.budget.noise_power_dbm
        if apply_blockage and self.users[i].blocked:
            b = self.heuristic_beams[i]
            if nz[b]:
                row[b] -= self.budget.blockage_attenuation_db
        return row

    def oracle_snr_table(self, apply_blockage: bool = True) -> np.ndarray:
        """Full-CSI K x N_b SNR table for the current state; no mutation."""
        return np.stack([self._snr_row(i, apply_blockage) for i in range(self.config.n_users)])

    # -- dynamics ----------------------------------------------------------

    def step(self, actions: np.ndarray) -> StepResult:
        cfg = self.config
        k = cfg.n_users
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (k,):
            raise ValueError(f"expected {k} actions, got shape {actions.shape}")
        if np.any(actions < 0) or np.any(actions >= cfg.n_beams):
            raise ValueError("beam index out of range")

        snr = np.empty(k)
        for i in range(k):
            snr[i] = self._snr_row(i)[actions[i]]
        blocked = np.array([u.blocked for u in self.users])
        n_switches = int(
            sum(
                1
                for i, u in enumerate(self.users)
                if u.current_beam >= 0 and actions[i] != u.current_beam
            )
        )
        rewards = np.array(
            [
                compute_reward(snr[i], self.users[i].prev_snr_db, n_switches, k, cfg.reward)
                for i in range(k)
            ]
        )
        thr = np.array([throughput_mbps(s, cfg.budget.bandwidth_hz) for s in snr])

        for i, u in enumerate(self.users):
            u.blockage_history = np.roll(u.blockage_history, -1)
            u.blockage_history[-1] = 1.0 if u.blocked else 0.0
            u.snr_history_db = np.roll(u.snr_history_db, -1)
            u.snr_history_db[-1] = snr[i]
            if u.current_beam == actions[i]:
                u.beam_persistence += 1
            else:
                u.beam_persistence = 1
            u.current_beam = int(actions[i])
            u.prev_snr_db = float(snr[i])

        # advance to the next decision state: mobility -> blockage -> fading
        for i, u in enumerate(self.users):
            mobility_step(
                u, cfg.dt_s, self.rng,
                arena_m=cfg.arena_m, bs_xy=cfg.bs_xy,
                speed_min=cfg.speed_min_mps, speed_max=cfg.speed_max_mps,
            )
            u.blocked = blockage_step(u.blocked, cfg.blockage, self.rng)
            self._redraw_channel(i)

        self.step_count += 1
        return StepResult(
            per_user_snr_db=snr,
            per_user_reward=rewards,
            n_switches=n_switches,
            per_user_blocked=blocked,
            per_user_throughput_mbps=thr,
        )


def init_env(config: EnvConfig, seed: int | np.random.Generator) -> Environment:
    """Build a freshly seeded environment (spec-level constructor)."""
    return Environment(config, seed)
