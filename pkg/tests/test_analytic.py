import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfcinv as scipy_erfcinv

from chirpnet import analytic
from chirpnet.analytic import (
    InterferenceGeometry,
    VulnerablePeriod,
    alpha_int_low_sinr,
    c2r_time_ratio,
    c2r_vulnerable_window,
    erfc_inv,
    frame_vulnerable_duration,
    p_r2r,
    pd_from_sinr,
    r2c_time_ratio,
    r2c_vulnerable_window,
    ser_qam,
    ser_with_interference,
    sir_c2r,
    sir_r2c,
    sir_r2r,
    two_radar_interference_rate,
    vulnerable_period_r2r,
)
from chirpnet.waveform import CommConfig, RadarWaveformConfig


# --- SIRs ---------------------------------------------------------------

def test_sir_r2r_reference(radar_table):
    geom = InterferenceGeometry(d=100.0, d_I=100.0)
    sir = sir_r2r(geom, radar_table)
    assert sir == pytest.approx(7.9577e-4, rel=1e-4)
    assert 10 * math.log10(sir) == pytest.approx(-31.0, abs=0.05)


def test_sir_r2r_unity_crossover(radar_table):
    d = 50.0
    d_i = math.sqrt(4 * math.pi * d ** 4 / radar_table.sigma)
    geom = InterferenceGeometry(d=d, d_I=d_i)
    assert sir_r2r(geom, radar_table) == pytest.approx(1.0)


def test_sir_r2r_interferer_distance_scaling(radar_table):
    near = sir_r2r(InterferenceGeometry(d=80.0, d_I=60.0), radar_table)
    far = sir_r2r(InterferenceGeometry(d=80.0, d_I=120.0), radar_table)
    assert far == pytest.approx(4 * near)


def test_sir_c2r_forms(radar_table, comm_table):
    geom = InterferenceGeometry(d=100.0, d_I=100.0)
    got = sir_c2r(geom, radar_table, comm_table)
    # with d_I = d the expression collapses to P_r*sigma/(P_c*4*pi*d^2)
    assert got == pytest.approx(
        radar_table.P_r * radar_table.sigma
        / (comm_table.P_c * 4 * math.pi * 100.0 ** 2))
    assert math.isinf(sir_c2r(geom, radar_table, replace(comm_table, P_c=0.0)))


def test_sir_r2c_symmetric_unity(radar_table, comm_table):
    geom = InterferenceGeometry(d=100.0, d_I=100.0)
    assert sir_r2c(geom, radar_table, comm_table) == pytest.approx(1.0)


# --- vulnerable periods --------------------------------------------------

def test_vulnerable_period_reference(radar_table):
    v = vulnerable_period_r2r(radar_table, alpha_d=1.0)
    assert v.duration == pytest.approx(2.0833e-6, abs=1e-9)
    assert v.lo == -v.hi


def test_vulnerable_period_exact_mode():
    radar = RadarWaveformConfig(f_r=77e9, B_r=1e9, T=20e-6, N=99, T_f=20e-3,
                                B_max=50e6, f_s=100e6)
    approx = vulnerable_period_r2r(radar, 1.0)
    exact = vulnerable_period_r2r(radar, 1.0, exact=True)
    assert approx.duration == pytest.approx(2e-6)
    assert exact.duration == pytest.approx(2e-6 + 2 * 0.25e-9)


def test_vulnerable_period_colocated(radar_table):
    v = vulnerable_period_r2r(radar_table, alpha_d=0.0)
    assert v.lo == 0.0
    assert v.hi == pytest.approx(radar_table.T * radar_table.B_max / radar_table.B_r)


def test_vulnerable_period_type_validation():
    with pytest.raises(ValueError):
        VulnerablePeriod(lo=1e-6, hi=2e-6)


def test_frame_vulnerable_duration(radar_1ghz):
    t_max = 1e-6
    assert frame_vulnerable_duration(radar_1ghz, 1.0) == \
        pytest.approx((2 * 99 - 1) * 2 * t_max)
    single = replace(radar_1ghz, N=1, T_f=1e-3)
    assert frame_vulnerable_duration(single, 1.0) == pytest.approx(2 * t_max)
    # the 2*(1+a)*N*T_max approximation overestimates by exactly (1+a)*T_max
    approx = 2 * 2 * 99 * t_max
    assert approx - frame_vulnerable_duration(radar_1ghz, 1.0) == \
        pytest.approx(2 * t_max)


# --- probabilities and time ratios ----------------------------------------

def test_p_r2r_reference(radar_1ghz):
    assert p_r2r(radar_1ghz, 1.0) == pytest.approx(0.0197, abs=1e-5)
    at_u2 = replace(radar_1ghz, T_f=9.9e-3)  # U = 0.2
    assert p_r2r(at_u2, 1.0) == pytest.approx(0.03980, abs=1e-5)
    assert p_r2r(replace(radar_1ghz, B_max=0.0), 1.0) == 0.0


def test_p_r2r_clamped_and_logged(caplog):
    radar = RadarWaveformConfig(f_r=77e9, B_r=1e8, T=20e-6, N=99, T_f=2.1e-3,
                                B_max=1e8, f_s=1e8)
    with caplog.at_level(logging.WARNING, logger="chirpnet.analytic"):
        assert p_r2r(radar, 20.0) == 1.0
    assert any("clamping" in rec.message for rec in caplog.records)


def test_time_ratios_reference(radar_1ghz, comm_table):
    assert c2r_time_ratio(radar_1ghz, comm_table) == pytest.approx(0.008910)
    assert r2c_time_ratio(radar_1ghz, comm_table) == pytest.approx(0.003960)


def test_time_ratios_saturate_at_duty_cycle(radar_1ghz):
    wide = CommConfig(f_c=77.8e9, B_c=2e9)
    radar = replace(radar_1ghz, f_s=2e9)
    assert c2r_time_ratio(radar, wide) == pytest.approx(radar.duty_cycle)
    assert r2c_time_ratio(radar, wide) == pytest.approx(radar.duty_cycle)


def test_vulnerable_windows(radar_1ghz, comm_table):
    _, dur_c2r = c2r_vulnerable_window(radar_1ghz, comm_table, k=0)
    assert dur_c2r == pytest.approx(1.8e-6)
    _, dur_r2c = r2c_vulnerable_window(radar_1ghz, comm_table, k=0)
    assert dur_r2c == pytest.approx(0.8e-6)
    # aligned carriers, zero bandwidth: window starts at the chirp start
    comm0 = CommConfig(f_c=radar_1ghz.f_r, B_c=0.0)
    start, _ = c2r_vulnerable_window(radar_1ghz, comm0, k=0)
    assert start == pytest.approx(0.0)
    start_k3, _ = c2r_vulnerable_window(radar_1ghz, comm0, k=3)
    assert start_k3 == pytest.approx(3 * radar_1ghz.T)
    with pytest.raises(ValueError):
        r2c_vulnerable_window(radar_1ghz, comm_table, k=-1)


# --- detection probability --------------------------------------------------

def test_erfc_inv_against_scipy():
    for y in (1e-9, 1e-6, 1e-3, 0.02, 0.5, 1.0, 1.5, 1.999):
        assert erfc_inv(y) == pytest.approx(float(scipy_erfcinv(y)), rel=1e-10)
    with pytest.raises(ValueError):
        erfc_inv(0.0)
    with pytest.raises(ValueError):
        erfc_inv(2.0)


def test_pd_identity_at_zero_sinr():
    for pfa in (1e-6, 1e-3, 0.1, 0.5):
        assert pd_from_sinr(pfa, 0.0) == pytest.approx(pfa, abs=1e-12)


def test_pd_reference_point():
    # frozen from an independent high-precision erfc evaluation
    assert pd_from_sinr(1e-2, 4.0) == pytest.approx(0.6921941124, abs=1e-9)


def test_pd_asymptote_and_validation():
    assert pd_from_sinr(1e-3, 1e6) > 1 - 1e-12
    with pytest.raises(ValueError):
        pd_from_sinr(0.0, 1.0)
    with pytest.raises(ValueError):
        pd_from_sinr(1.0, 1.0)
    with pytest.raises(ValueError):
        pd_from_sinr(0.5, -1.0)


@given(st.floats(1e-6, 0.5), st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_pd_monotone_in_sinr(pfa, s1, s2):
    lo, hi = sorted((s1, s2))
    assert pd_from_sinr(pfa, lo) <= pd_from_sinr(pfa, hi) + 1e-12


@given(st.floats(1e-6, 0.4), st.floats(1e-6, 0.4), st.floats(0.0, 50.0))
def test_pd_monotone_in_pfa(p1, p2, sinr):
    lo, hi = sorted((p1, p2))
    assert pd_from_sinr(lo, sinr) <= pd_from_sinr(hi, sinr) + 1e-12


# --- symbol error rates -------------------------------------------------------

def test_ser_qam_known_values():
    # frozen from the closed form evaluated with scipy.special.erfc
    assert ser_qam(16, 10 ** 0.5) == pytest.approx(0.5373851325, rel=1e-9)
    assert ser_qam(16, 10 ** 2.0) == pytest.approx(1.1616291e-5, rel=1e-6)
    # at zero SNR each axis errs with probability 0.75/2: ser = 1 - 0.25^2...
    # p_half = 2*(3/4)*Q(0) = 0.75, so ser = 1 - (1 - 0.75)^2 = 0.9375
    assert ser_qam(16, 0.0) == pytest.approx(0.9375)
    with pytest.raises(ValueError):
        ser_qam(8, 1.0)


def test_ser_with_interference_limits():
    assert ser_with_interference(0.3, 0.0) == pytest.approx(0.3)
    assert ser_with_interference(0.3, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ser_with_interference(1.2, 0.5)
    with pytest.raises(ValueError):
        ser_with_interference(0.5, -0.1)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_ser_with_interference_dominates(ps, a):
    bound = ser_with_interference(ps, a)
    assert bound >= ps - 1e-15
    if a > 1e-9 and ps < 1 - 1e-9:
        assert bound > ps


def test_alpha_int_low_sinr(radar_1ghz, comm_table):
    assert alpha_int_low_sinr(radar_1ghz, comm_table) == pytest.approx(0.04)


# --- monotonicity properties ---------------------------------------------------

@given(st.floats(1e6, 1e8), st.floats(1e6, 1e8))
@settings(max_examples=50)
def test_p_r2r_monotone_in_b_max(b1, b2):
    lo, hi = sorted((b1, b2))
    base = dict(f_r=77e9, B_r=1e9, T=20e-6, N=99, T_f=20e-3, f_s=1e8)
    p_lo = p_r2r(RadarWaveformConfig(B_max=lo, **base), 1.0)
    p_hi = p_r2r(RadarWaveformConfig(B_max=hi, **base), 1.0)
    assert 0.0 <= p_lo <= p_hi <= 1.0


@given(st.floats(1e5, 5e7), st.floats(1e5, 5e7))
@settings(max_examples=50)
def test_r2c_never_exceeds_c2r(bc1, bc2):
    radar = RadarWaveformConfig(f_r=77e9, B_r=1e9, T=20e-6, N=99, T_f=20e-3,
                                B_max=50e6, f_s=1e8)
    for bc in (bc1, bc2):
        comm = CommConfig(f_c=77.8e9, B_c=bc)
        assert r2c_time_ratio(radar, comm) <= c2r_time_ratio(radar, comm) + 1e-15


# --- Monte Carlo oracle agreement ----------------------------------------------

def test_two_radar_oracle_matches_formula(radar_1ghz):
    n = 100_000
    p = p_r2r(radar_1ghz, 1.0)
    rate = two_radar_interference_rate(radar_1ghz, 1.0, n, seed=42)
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(rate - p) <= 3 * sigma


def test_two_radar_oracle_scales_with_duty_cycle(radar_1ghz):
    n = 100_000
    fast = replace(radar_1ghz, T_f=9.9e-3)  # doubles U to 0.2
    p = p_r2r(fast, 1.0)
    rate = two_radar_interference_rate(fast, 1.0, n, seed=7)
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / n)
