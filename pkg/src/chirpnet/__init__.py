"""FMCW radar / communication coexistence: closed-form interference analysis,
baseband PHY chain, and a deterministic slot-coordination MAC simulator."""

from chirpnet.waveform import (
    C_LIGHT,
    CommConfig,
    ConfigError,
    DerivedQuantities,
    RadarWaveformConfig,
    derive_quantities,
    instantaneous_frequency,
)

__version__ = "0.1.0"

__all__ = [
    "C_LIGHT",
    "CommConfig",
    "ConfigError",
    "DerivedQuantities",
    "RadarWaveformConfig",
    "derive_quantities",
    "instantaneous_frequency",
    "__version__",
]
