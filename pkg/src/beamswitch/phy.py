"""Physical-layer math for the beam-switching simulator.

Implements:
- DFT beamforming codebook and ULA steering vectors
- 3GPP TR 38.901 UMi-Street-Canyon LOS path loss (with breakpoint)
- Rayleigh / Rician block fading
- Link budget, per-beam SNR and Shannon throughput

All functions are pure: randomness enters only through an explicitly
passed ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s
THERMAL_NOISE_DBM_PER_HZ = -174.0
SNR_FLOOR_DB = -60.0  # returned when the beamformed gain underflows to 0


@dataclass(frozen=True)
class LinkBudget:
    """Transmit/noise-side constants of the downlink."""

    tx_power_dbm: float = 38.0
    bandwidth_hz: float = 100e6
    noise_figure_db: float = 7.0
    carrier_freq_hz: float = 28e9
    blockage_attenuation_db: float = 12.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.blockage_attenuation_db < 0:
            raise ValueError("blockage_attenuation_db must be >= 0")

    @property
    def noise_power_dbm(self) -> float:
        return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db


@dataclass(frozen=True)
class ChannelModelConfig:
    """Small-scale fading configuration.

    ``mode`` is either ``"pure-rayleigh"`` (i.i.d. CN(0,1) entries, no
    angular structure) or ``"rician"`` (LOS steering component with
    K-factor ``rician_k_db`` plus scattered Rayleigh part).
    ``rician_k_db=inf`` degenerates to a pure LOS channel.
    """

    mode: str = "rician"
    rician_k_db: float = 10.0
    antenna_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.mode not in ("pure-rayleigh", "rician"):
            raise ValueError(f"unknown channel mode: {self.mode!r}")
        if self.antenna_spacing_wavelengths <= 0:
            raise ValueError("antenna_spacing_wavelengths must be positive")


class Codebook:
    """A set of unit-norm beamforming vectors, one per column-like beam.

    ``beams`` has shape (n_beams, n_antennas); each row is one beam.
    """

    def __init__(self, beams: np.ndarray):
        beams = np.asarray(beams, dtype=np.complex128)
        if beams.ndim != 2:
            raise ValueError("beams must be a 2-D (n_beams, n_antennas) array")
        self.beams = beams
        self.n_beams = beams.shape[0]
        self.n_antennas = beams.shape[1]

    def gram(self) -> np.ndarray:
        """Pairwise inner products; identity for an orthonormal codebook."""
        return self.beams.conj() @ self.beams.T


def make_dft_codebook(n_antennas: int, n_beams: int | None = None) -> Codebook:
    """Build the DFT codebook: beam b, element n = exp(i 2π n b / N) / sqrt(N).

    Beams are unit-norm and mutually orthogonal. ``n_beams`` defaults to
    ``n_antennas`` (the full DFT matrix) and may only be reduced, in which
    case the first ``n_beams`` columns are kept.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    if n_beams is None:
        n_beams = n_antennas
    if not 1 <= n_beams <= n_antennas:
        raise ValueError("n_beams must be in [1, n_antennas]")
    n = np.arange(n_antennas)
    b = np.arange(n_beams)
    phase = 2.0 * np.pi * np.outer(b, n) / n_antennas
    beams = np.exp(1j * phase) / np.sqrt(n_antennas)
    return Codebook(beams)


def steering_vector(angle_rad: float, n_antennas: int, spacing_wavelengths: float = 0.5) -> np.ndarray:
    """ULA array response for a plane wave at ``angle_rad`` off broadside.

    Element n = exp(i 2π d n sin(θ)) / sqrt(N) with d in wavelengths.
    Unit norm by construction.
    """
    if abs(angle_rad) > np.pi / 2 + 1e-12:
        raise ValueError("angle_rad must satisfy |angle| <= pi/2")
    n = np.arange(n_antennas)
    phase = 2.0 * np.pi * spacing_wavelengths * n * np.sin(angle_rad)
    return np.exp(1j * phase) / np.sqrt(n_antennas)


def path_loss_umi_db(
    distance_2d_m: float,
    bs_height_m: float = 10.0,
    ue_height_m: float = 1.5,
    carrier_freq_hz: float = 28e9,
) -> float:
    """3GPP TR 38.901 UMi-Street-Canyon LOS path loss in dB.

    Below the breakpoint distance:
        PL1 = 32.4 + 21 log10(d_3D) + 20 log10(f_GHz)
    above it:
        PL2 = 32.4 + 40 log10(d_3D) + 20 log10(f_GHz)
              - 9.5 log10(d_BP^2 + (h_BS - h_UT)^2)
    with d_BP = 4 (h_BS - 1)(h_UT - 1) f_c / c (effective antenna
    heights reduced by the 1 m environment height).

    2-D distances below 1 m are clamped to 1 m.
    """
    if bs_height_m <= 0 or ue_height_m <= 0:
        raise ValueError("antenna heights must be positive")
    d2d = max(float(distance_2d_m), 1.0)
    dh = bs_height_m - ue_height_m
    d3d = math.sqrt(d2d * d2d + dh * dh)
    f_ghz = carrier_freq_hz / 1e9
    d_bp = 4.0 * (bs_height_m - 1.0) * (ue_height_m - 1.0) * carrier_freq_hz / SPEED_OF_LIGHT
    if d2d <= d_bp:
        return 32.4 + 21.0 * math.log10(d3d) + 20.0 * math.log10(f_ghz)
    return (
        32.4
        + 40.0 * math.log10(d3d)
        + 20.0 * math.log10(f_ghz)
        - 9.5 * math.log10(d_bp * d_bp + dh * dh)
    )


def breakpoint_distance_m(bs_height_m: float, ue_height_m: float, carrier_freq_hz: float) -> float:
    return 4.0 * (bs_height_m - 1.0) * (ue_height_m - 1.0) * carrier_freq_hz / SPEED_OF_LIGHT


def sample_fading(
    rng: np.random.Generator,
    config: ChannelModelConfig,
    angle_rad: float,
    n_antennas: int,
) -> np.ndarray:
    """Draw one block-fading channel vector h with E[||h||^2] = N.

    pure-rayleigh: h ~ CN(0, I), per-element variance 1.
    rician: sqrt(K/(K+1)) * sqrt(N) * steering(angle) + sqrt(1/(K+1)) * CN(0, I).
    """
    scatter = (
        rng.standard_normal(n_antennas) + 1j * rng.standard_normal(n_antennas)
    ) / math.sqrt(2.0)
    if config.mode == "pure-rayleigh":
        return scatter
    if math.isinf(config.rician_k_db):
        los = steering_vector(angle_rad, n_antennas, config.antenna_spacing_wavelengths)
        return math.sqrt(n_antennas) * los
    k = 10.0 ** (config.rician_k_db / 10.0)
    los = steering_vector(angle_rad, n_antennas, config.antenna_spacing_wavelengths)
    return math.sqrt(k / (k + 1.0)) * math.sqrt(n_antennas) * los + math.sqrt(1.0 / (k + 1.0)) * scatter


def effective_channel(h: np.ndarray, path_loss_db: float) -> np.ndarray:
    """Apply path loss as a linear amplitude gain: h_eff = sqrt(10^(-PL/10)) h."""
    return math.sqrt(10.0 ** (-path_loss_db / 10.0)) * h


def snr_db(
    h_eff: np.ndarray,
    beam: np.ndarray,
    budget: LinkBudget,
    path_blocked: bool = False,
    beam_is_heuristic: bool = False,
) -> float:
    """Received SNR in dB for one user under one beam.

    SNR = P_tx + 10 log10(|beam^H h_eff|^2) - noise_power
          - ATT_block  (only if the path is blocked AND the chosen beam is
                        the heuristic/direct-path beam)

    Returns ``SNR_FLOOR_DB`` if the beamformed gain underflows to exactly 0.
    """
    if h_eff.shape != beam.shape:
        raise ValueError("h_eff and beam must have the same shape")
    gain = abs(np.vdot(beam, h_eff)) ** 2
    if gain == 0.0:
        return SNR_FLOOR_DB
    value = budget.tx_power_dbm + 10.0 * math.log10(gain) - budget.noise_power_dbm
    if path_blocked and beam_is_heuristic:
        value -= budget.blockage_attenuation_db
    return value


def throughput_mbps(snr_db_value: float, bandwidth_hz: float) -> float:
    """Shannon throughput B log2(1 + SNR) in Mbps."""
    return bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db_value / 10.0)) / 1e6


def heuristic_beam_index(angle_rad: float, codebook: Codebook, spacing_wavelengths: float = 0.5) -> int:
    """Codebook beam best aligned with the direct path at ``angle_rad``.

    argmax_b |w_b^H s(angle)|, ties broken toward the lowest index.
    """
    sv = steering_vector(angle_rad, codebook.n_antennas, spacing_wavelengths)
    gains = np.abs(codebook.beams.conj() @ sv)
    return int(np.argmax(gains))
