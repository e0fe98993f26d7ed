"""Closed-form mutual-interference quantities for spectrally coexisting FMCW
radar and narrowband communication links.

Covers radar-to-radar (R2R), communication-to-radar (C2R) and
radar-to-communication (R2C) directions: signal-to-interference ratios,
vulnerable periods, interference probabilities / time ratios, detection
probability and QAM symbol-error bounds. All functions are pure; SIRs are
returned as linear ratios (dB conversion is a presentation concern).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from chirpnet.waveform import CommConfig, RadarWaveformConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VulnerablePeriod:
    """Interval of relative chirp start offsets that cause interference."""

    lo: float  # [s], <= 0
    hi: float  # [s], >= 0

    def __post_init__(self):
        if self.lo > 0 or self.hi < 0:
            raise ValueError(f"vulnerable period must straddle 0, got [{self.lo}, {self.hi}]")

    @property
    def duration(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class InterferenceGeometry:
    """Victim/target/interferer placement for the SIR expressions."""

    d: float            # target distance [m]
    d_I: float          # interferer distance [m]
    v: float = 0.0      # target relative velocity [m/s]
    v_I: float = 0.0    # interferer relative velocity [m/s]
    alpha_d: float = 1.0  # longest-interference-path factor

    def __post_init__(self):
        if self.d <= 0 or self.d_I <= 0:
            raise ValueError("distances must be positive")
        if self.alpha_d < 0:
            raise ValueError("alpha_d must be >= 0")


def _clamp_unit(value: float, what: str) -> float:
    if value < 0.0 or value > 1.0:
        logger.warning("clamping %s = %.6g into [0, 1]", what, value)
        return min(max(value, 0.0), 1.0)
    return value


# --- signal-to-interference ratios -----------------------------------------

def sir_r2r(geom: InterferenceGeometry, radar: RadarWaveformConfig) -> float:
    """Backscattered echo vs line-of-sight interfering radar: sigma*d_I^2/(4*pi*d^4)."""
    return radar.sigma * geom.d_I ** 2 / (4 * math.pi * geom.d ** 4)


def sir_c2r(geom: InterferenceGeometry, radar: RadarWaveformConfig, comm: CommConfig) -> float:
    """Radar echo vs direct communication interference at a radar receiver."""
    if comm.P_c == 0:
        return math.inf
    return radar.P_r * radar.sigma * geom.d_I ** 2 / (comm.P_c * 4 * math.pi * geom.d ** 4)


def sir_r2c(geom: InterferenceGeometry, radar: RadarWaveformConfig, comm: CommConfig) -> float:
    """Communication link vs direct chirp interference at a comm receiver."""
    if radar.P_r == 0:
        return math.inf
    return comm.P_c * geom.d_I ** 2 / (radar.P_r * geom.d ** 2)


# --- vulnerable periods and interference probability ------------------------

def vulnerable_period_r2r(radar: RadarWaveformConfig, alpha_d: float,
                          exact: bool = False) -> VulnerablePeriod:
    """Offsets of a same-parameter interfering chirp that land in the beat band.

    The default drops the Doppler time-delay term 1/(4*B_r), which is
    negligible whenever B_r*T_max >> 1; ``exact=True`` widens both ends by it.
    """
    if alpha_d < 0:
        raise ValueError("alpha_d must be >= 0")
    t_max = radar.T * radar.B_max / radar.B_r
    pad = 1 / (4 * radar.B_r) if exact else 0.0
    return VulnerablePeriod(lo=-(alpha_d * t_max + pad), hi=t_max + pad)


def frame_vulnerable_duration(radar: RadarWaveformConfig, alpha_d: float) -> float:
    """Measure of the union of all per-chirp vulnerable periods over a frame.

    Exact union size (2N-1)*(1+alpha_d)*T_max; the convenient approximation
    2*(1+alpha_d)*N*T_max overestimates it by (1+alpha_d)*T_max.
    """
    t_max = radar.T * radar.B_max / radar.B_r
    return (2 * radar.N - 1) * (1 + alpha_d) * t_max


def p_r2r(radar: RadarWaveformConfig, alpha_d: float) -> float:
    """Two-radar interference probability for uniform random chirp start offsets."""
    p = (1 + alpha_d) * (2 * radar.N - 1) * radar.duty_cycle * radar.B_max \
        / (radar.N * radar.B_r)
    return _clamp_unit(p, "p_r2r")


def c2r_time_ratio(radar: RadarWaveformConfig, comm: CommConfig) -> float:
    """Fraction of time a radar receiver is disrupted by a continuous comm transmitter."""
    r = radar.duty_cycle * min(radar.B_max + comm.B_c, radar.B_r) / radar.B_r
    return _clamp_unit(r, "c2r_time_ratio")


def r2c_time_ratio(radar: RadarWaveformConfig, comm: CommConfig) -> float:
    """Fraction of time a comm receiver is swept by an interfering chirp sequence."""
    r = radar.duty_cycle * min(comm.B_c, radar.B_r) / radar.B_r
    return _clamp_unit(r, "r2c_time_ratio")


def c2r_vulnerable_window(radar: RadarWaveformConfig, comm: CommConfig, k: int,
                          f_D_c: float = 0.0) -> tuple[float, float]:
    """(start, duration) of the comm-interference window inside chirp k of the victim radar.

    ``f_D_c`` is the Doppler shift of the communication carrier.
    """
    if k < 0:
        raise ValueError("chirp index k must be >= 0")
    start = (k + (comm.f_c + f_D_c - radar.f_r - comm.B_c / 2) / radar.B_r) * radar.T
    duration = min(radar.B_max + comm.B_c, radar.B_r) / radar.B_r * radar.T
    return start, duration


def r2c_vulnerable_window(radar: RadarWaveformConfig, comm: CommConfig, k: int,
                          f_D_I: float = 0.0) -> tuple[float, float]:
    """(start, duration) of the chirp crossing through the comm band, for chirp k.

    ``f_D_I`` is the Doppler shift of the interfering radar carrier.
    """
    if k < 0:
        raise ValueError("chirp index k must be >= 0")
    start = (k + (comm.f_c - radar.f_r - f_D_I - comm.B_c / 2) / radar.B_r) * radar.T
    duration = min(comm.B_c, radar.B_r) / radar.B_r * radar.T
    return start, duration


# --- detection probability ---------------------------------------------------

def erfc_inv(y: float) -> float:
    """Inverse complementary error function on (0, 2).

    Bisection bracket followed by Newton polish on math.erfc, converging to
    ~1e-15 relative; no special-function library needed at runtime.
    """
    if not 0.0 < y < 2.0:
        raise ValueError(f"erfc_inv argument must be in (0, 2), got {y}")
    lo, hi = -10.0, 10.0  # erfc(-10) ~ 2, erfc(10) ~ 2e-45
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if math.erfc(mid) > y:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(4):
        f = math.erfc(x) - y
        df = -2.0 / math.sqrt(math.pi) * math.exp(-x * x)
        if df == 0.0:
            break
        step = f / df
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def pd_from_sinr(pfa: float, sinr: float) -> float:
    """Detection probability of a range-Doppler cell at the given SINR.

    Pd = 1/2 * erfc(erfc_inv(2*pfa) - sqrt(sinr)); reduces to pfa at sinr=0.
    """
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must be in (0, 1), got {pfa}")
    if sinr < 0:
        raise ValueError(f"sinr must be >= 0, got {sinr}")
    return 0.5 * math.erfc(erfc_inv(2 * pfa) - math.sqrt(sinr))


# --- symbol error rates -------------------------------------------------------

def _q_func(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ser_qam(constellation_size: int, snr: float) -> float:
    """Exact symbol error rate of square M-QAM over AWGN at linear SNR (Es/N0)."""
    m = constellation_size
    root = math.isqrt(m)
    if root * root != m:
        raise ValueError(f"square QAM required, got M = {m}")
    if snr < 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    p_half = 2 * (1 - 1 / root) * _q_func(math.sqrt(3 * snr / (m - 1)))
    return 1 - (1 - p_half) ** 2


def ser_with_interference(ps: float, alpha_int: float) -> float:
    """Upper bound on SER when a fraction alpha_int of symbols is hit by strong
    chirp interference: alpha_int + ps*(1 - alpha_int)."""
    if not 0.0 <= ps <= 1.0:
        raise ValueError(f"ps must be in [0, 1], got {ps}")
    if not 0.0 <= alpha_int <= 1.0:
        raise ValueError(f"alpha_int must be in [0, 1], got {alpha_int}")
    return alpha_int + ps * (1 - alpha_int)


def alpha_int_low_sinr(radar: RadarWaveformConfig, comm: CommConfig) -> float:
    """Low-SINR approximation of the interfered-symbol fraction: B_c/B_r."""
    return _clamp_unit(comm.B_c / radar.B_r, "alpha_int")


# --- brute-force verification oracle ------------------------------------------

def two_radar_interference_rate(radar: RadarWaveformConfig, alpha_d: float,
                                n_trials: int, seed: int) -> float:
    """Monte Carlo estimate of the two-radar interference probability.

    Draws uniform frame start offsets and tests membership of the relative
    offset in the union of per-chirp vulnerable periods directly (no use of
    the closed-form probability), so it serves as an independent check of
    :func:`p_r2r`.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    period = vulnerable_period_r2r(radar, alpha_d)
    lo, hi = -period.lo, period.hi  # lo, hi both >= 0
    t, n = radar.T, radar.N
    span_lo = -(n - 1) * t - lo
    span_hi = (n - 1) * t + hi
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.0, radar.T_f, size=n_trials)

    def in_union(x):
        inside = (x >= span_lo) & (x <= span_hi)
        m = np.mod(x, t)
        return inside & ((m <= hi) | (m >= t - lo))

    # both radars draw uniform starts each frame, so the relative offset is
    # uniform modulo T_f; test the offset and its wrapped copy
    hits = in_union(tau) | in_union(tau - radar.T_f)
    return float(np.count_nonzero(hits)) / n_trials
