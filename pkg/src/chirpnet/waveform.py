"""FMCW chirp-sequence and control-channel waveform parameters.

Conventions used throughout the package: frequencies in Hz, times in
seconds, powers in watts, distances in meters. All configs are frozen
value types; functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

C_LIGHT = 299792458.0  # speed of light [m/s]


class ConfigError(ValueError):
    """A waveform, channel or scenario configuration violates an invariant."""


@dataclass(frozen=True)
class RadarWaveformConfig:
    """Sawtooth FMCW chirp-sequence parameters.

    A frame consists of ``N`` back-to-back chirps of duration ``T`` sweeping
    ``B_r``, followed by idle/processing time up to ``T_f``. The receiver
    keeps beat frequencies inside ``[-B_max, 0]`` only.
    """

    f_r: float            # carrier frequency [Hz]
    B_r: float            # sweep bandwidth [Hz]
    T: float              # chirp duration [s]
    N: int                # chirps per frame
    T_f: float            # frame duration [s]
    B_max: float          # receiver beat bandwidth of interest [Hz]
    f_s: float            # complex-baseband ADC bandwidth [Hz]
    P_r: float = 5e-3     # transmit power [W]
    sigma: float = 100.0  # target radar cross section [m^2] (20 dBsm)

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.T <= 0:
            raise ConfigError(f"T must be > 0, got {self.T}")
        if self.B_r <= 0:
            raise ConfigError(f"B_r must be > 0, got {self.B_r}")
        if self.f_r <= 0:
            raise ConfigError(f"f_r must be > 0, got {self.f_r}")
        if self.f_s <= 0:
            raise ConfigError(f"f_s must be > 0, got {self.f_s}")
        if self.B_max < 0:
            raise ConfigError(f"B_max must be >= 0, got {self.B_max}")
        if self.B_max > self.f_s:
            raise ConfigError(
                f"B_max ({self.B_max}) must not exceed ADC bandwidth f_s ({self.f_s})")
        if (self.N + 1) * self.T > self.T_f * (1 + 1e-12):
            raise ConfigError(
                f"(N+1)*T = {(self.N + 1) * self.T} exceeds frame time T_f = {self.T_f}")
        if self.P_r < 0 or self.sigma < 0:
            raise ConfigError("P_r and sigma must be non-negative")

    @property
    def duty_cycle(self) -> float:
        """U = N*T/T_f, fraction of the frame spent chirping."""
        return self.N * self.T / self.T_f

    @property
    def duty_cycle_slotted(self) -> float:
        """U' = (N+1)*T/T_f, duty cycle including one idle chirp per slot."""
        return (self.N + 1) * self.T / self.T_f

    @property
    def chirp_slope(self) -> float:
        """Sweep rate B_r/T [Hz/s]."""
        return self.B_r / self.T

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.f_r


@dataclass(frozen=True)
class CommConfig:
    """Narrowband control-channel parameters, sharing the radar ADC."""

    f_c: float                  # carrier [Hz]
    B_c: float                  # bandwidth [Hz]
    P_c: float = 5e-3           # transmit power [W]
    constellation_size: int = 16
    rolloff: float = 0.0        # pulse-shaping roll-off alpha >= 0
    packet_bits: int = 4800     # control packet size [bits]
    slot_time: float = 10e-6    # CSMA SlotTime delta [s]
    W0: int = 6                 # base contention window
    B_stage: int = 3            # maximum backoff stage

    def __post_init__(self):
        if self.B_c < 0:
            raise ConfigError(f"B_c must be >= 0, got {self.B_c}")
        m = self.constellation_size
        if m < 2 or (m & (m - 1)) != 0:
            raise ConfigError(f"constellation_size must be a power of 2, got {m}")
        if self.rolloff < 0:
            raise ConfigError(f"rolloff must be >= 0, got {self.rolloff}")
        if self.packet_bits < 1:
            raise ConfigError(f"packet_bits must be >= 1, got {self.packet_bits}")
        if self.slot_time <= 0:
            raise ConfigError(f"slot_time must be > 0, got {self.slot_time}")
        if self.W0 < 1:
            raise ConfigError(f"W0 must be >= 1, got {self.W0}")
        if self.B_stage < 0:
            raise ConfigError(f"B_stage must be >= 0, got {self.B_stage}")
        if self.P_c < 0:
            raise ConfigError("P_c must be non-negative")

    @property
    def bits_per_symbol(self) -> float:
        return math.log2(self.constellation_size)


@dataclass(frozen=True)
class DerivedQuantities:
    """Quantities derived from a (radar, comm) config pair."""

    T_max: float                # max in-band reflection delay [s]
    d_max: float                # max detectable range [m]
    v_max: float                # max unambiguous relative velocity [m/s]
    range_resolution: float     # [m]
    velocity_resolution: float  # [m/s]
    U: float                    # radar duty cycle
    U_prime: float              # slotted duty cycle
    T_pkt: float                # control packet duration [s]


def derive_quantities(radar: RadarWaveformConfig, comm: CommConfig) -> DerivedQuantities:
    """Populate every derived quantity for a validated config pair.

    Packet size is a bit count, so the packet duration is
    ``(packet_bits / bits_per_symbol) * (1 + rolloff) / B_c`` (infinite for a
    zero-bandwidth control channel). Deterministic and pure.
    """
    if comm.B_c > radar.f_s:
        raise ConfigError(
            f"comm bandwidth B_c ({comm.B_c}) must not exceed radar ADC f_s ({radar.f_s})")
    t_max = radar.T * radar.B_max / radar.B_r
    if comm.B_c > 0:
        t_pkt = (comm.packet_bits / comm.bits_per_symbol) * (1 + comm.rolloff) / comm.B_c
    else:
        t_pkt = math.inf
    return DerivedQuantities(
        T_max=t_max,
        d_max=C_LIGHT * t_max / 2,
        v_max=C_LIGHT / (4 * radar.f_r * radar.T),
        range_resolution=C_LIGHT / (2 * radar.B_r),
        velocity_resolution=C_LIGHT / (2 * radar.f_r * radar.N * radar.T),
        U=radar.duty_cycle,
        U_prime=radar.duty_cycle_slotted,
        T_pkt=t_pkt,
    )


def instantaneous_frequency(cfg: RadarWaveformConfig, t: float) -> float:
    """Frequency of the chirp at time ``t`` within a single sweep: f_r + (B_r/T)*t."""
    if t < 0 or t > cfg.T:
        raise ValueError(f"t = {t} outside chirp duration [0, {cfg.T}]")
    return cfg.f_r + cfg.chirp_slope * t
