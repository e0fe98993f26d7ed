import pytest

from chirpnet.waveform import CommConfig, RadarWaveformConfig


@pytest.fixture
def radar_table():
    """Reference chirp-sequence parameters used throughout the tests."""
    return RadarWaveformConfig(f_r=77e9, B_r=0.96e9, T=20e-6, N=99, T_f=20e-3,
                               B_max=50e6, f_s=100e6, P_r=5e-3, sigma=100.0)


@pytest.fixture
def radar_1ghz(radar_table):
    from dataclasses import replace
    return replace(radar_table, B_r=1e9)


@pytest.fixture
def comm_table():
    return CommConfig(f_c=77.8e9, B_c=40e6, P_c=5e-3, constellation_size=16,
                      rolloff=0.0, packet_bits=4800, slot_time=10e-6, W0=6,
                      B_stage=3)
