import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal, stats

from neuroaccel.dynamics import Physics
from neuroaccel.reservoir import _Engine
from neuroaccel.signal_chain import (
    AcquisitionConfig,
    DriveConfig,
    ShakerModel,
    SlotGrid,
    adc_sample,
    demodulate_envelope,
    drive_envelope,
    generate_mask,
    quantize,
    rescale_to_reference,
    shaker_transform,
    slot_index,
    synthesize_drive,
)

FD = 245e3
CARRIER = 2 * FD
FS = 24 * CARRIER


def tone(freq, amp, seconds=400e-6, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return amp * np.cos(2 * np.pi * freq * t)


# --- mask ---------------------------------------------------------------------


def test_mask_values_and_determinism():
    cfg = DriveConfig()
    m = generate_mask(cfg)
    assert len(m) == 100 and set(np.unique(m.values)) <= {0.45, 0.7}
    np.testing.assert_array_equal(m.values, generate_mask(DriveConfig()).values)
    assert not np.array_equal(m.values, generate_mask(DriveConfig(mask_seed=1)).values)


def test_mask_statistics():
    m = generate_mask(DriveConfig(n_nodes=100_000, mask_seed=5)).values
    mean, half = (0.45 + 0.7) / 2, (0.7 - 0.45) / 2
    sigma = half / math.sqrt(m.size)  # Bernoulli(1/2) on {low, high}
    assert abs(m.mean() - mean) <= 3 * sigma


def test_drive_config_validation_and_theta_warning(caplog):
    with pytest.raises(ValueError):
        DriveConfig(theta=0)
    with pytest.raises(ValueError):
        DriveConfig(n_nodes=0)
    assert DriveConfig().tau == pytest.approx(5e-3)
    with caplog.at_level(logging.WARNING):
        assert not DriveConfig(theta=500e-6).check_theta(96e-6)
    assert "ring-down" in caplog.text
    assert DriveConfig().check_theta(96e-6)


# --- drive synthesis -----------------------------------------------------------


def test_pure_carrier_when_mask_zero_and_no_feedback():
    cfg = DriveConfig(alpha=0.0, mask_low=0.0, mask_high=0.0, v0=10.0)
    m = generate_mask(cfg)
    for t in np.linspace(0, 3e-3, 37):
        assert synthesize_drive(m, None, cfg, t) == pytest.approx(10.0 * math.cos(2 * math.pi * cfg.fd * t))


def test_envelope_arithmetic_example():
    cfg = DriveConfig(mask_low=0.7, mask_high=0.7, alpha=1.2, v0=135)
    m = generate_mask(cfg)
    env = drive_envelope(m, np.full(cfg.n_nodes, 0.5), cfg)
    assert np.allclose(env, 310.5)
    # at t = 0 the carrier is at its crest
    assert synthesize_drive(m, np.full(cfg.n_nodes, 0.5), cfg, 0.0) == pytest.approx(310.5)


def test_slot_boundaries_and_periodicity():
    cfg = DriveConfig()
    assert slot_index(0.0, cfg) == 0
    assert slot_index(49.999e-6, cfg) == 0
    assert slot_index(50e-6, cfg) == 1
    assert slot_index(99 * 50e-6 + 1e-7, cfg) == 99


@given(st.floats(0, 1.0))
def test_slot_index_periodic_in_tau(t):
    cfg = DriveConfig()
    assert slot_index(t, cfg) == slot_index(t + cfg.tau, cfg)


@given(
    st.floats(0, 1),
    st.floats(0, 3),
    st.integers(0, 1000),
)
def test_envelope_nonnegative_in_operating_range(fb, alpha, seed):
    cfg = DriveConfig(alpha=alpha, mask_seed=seed)
    assert np.all(drive_envelope(generate_mask(cfg), np.full(cfg.n_nodes, fb), cfg) >= 0)


def test_negative_envelope_rejected():
    cfg = DriveConfig(alpha=-5.0)
    with pytest.raises(ValueError):
        drive_envelope(generate_mask(cfg), np.ones(cfg.n_nodes), cfg)


def test_first_period_feedback_is_zero():
    cfg = DriveConfig()
    m = generate_mask(cfg)
    assert synthesize_drive(m, None, cfg, 1e-6) == synthesize_drive(m, np.zeros(100), cfg, 1e-6)
    with pytest.raises(ValueError):
        synthesize_drive(m, None, cfg, -1.0)


# --- shaker ---------------------------------------------------------------------


def test_ideal_shaker_is_identity():
    x = np.random.default_rng(0).normal(size=500)
    np.testing.assert_array_equal(shaker_transform(x, ShakerModel.default(mode="ideal")), x)


def test_default_shaker_stable():
    assert np.all(np.abs(ShakerModel.default().poles()) < 1)
    with pytest.raises(ValueError):
        ShakerModel(np.array([[1, 0, 0, 1, -2.5, 1.5]]), 20e3)
    with pytest.raises(ValueError):
        ShakerModel.default(mode="broken")


def test_filtered_shaker_statistics_on_white_setpoints():
    u = np.random.default_rng(1).uniform(0, 0.5, 4000)
    sh = ShakerModel.default(sample_rate=20e3)
    a = shaker_transform(np.repeat(u * 4 * 9.8, 100), sh).reshape(4000, 100).mean(axis=1)
    a = a[100:]
    ac1 = np.corrcoef(a[1:], a[:-1])[0, 1]
    assert ac1 > 0.2
    kurt = stats.kurtosis(a)  # excess
    assert abs(kurt) < abs(-1.2)


def test_shaker_rejects_nonfinite():
    with pytest.raises(ValueError):
        shaker_transform(np.array([0.0, np.nan]), ShakerModel.default())


def _table_position(accel, model):
    dt = 1.0 / model.sample_rate
    leak = math.exp(-2 * math.pi * model.centering_hz * dt)
    return signal.lfilter([dt], [1, -leak], signal.lfilter([dt], [1, -leak], accel))


@given(st.floats(0.2, 20.0), st.floats(1.0, 500.0))
def test_shaker_position_within_travel(freq, amplitude):
    fs = 2000.0
    t = np.arange(int(3 * fs)) / fs
    sh = ShakerModel.default(sample_rate=fs)
    a = shaker_transform(amplitude * np.sin(2 * np.pi * freq * t), sh)
    assert np.max(np.abs(_table_position(a, sh))) <= sh.travel_limit * (1 + 1e-9)


def test_shaker_small_signal_is_linear():
    x = 1e-3 * np.random.default_rng(4).normal(size=5000)
    sh = ShakerModel.default()
    np.testing.assert_allclose(shaker_transform(x, sh), signal.sosfilt(sh.sos, x), rtol=1e-6, atol=1e-12)


# --- rescale ------------------------------------------------------------------------


def test_rescale_examples():
    ref = np.random.default_rng(2).uniform(0, 0.5, 200)
    np.testing.assert_allclose(rescale_to_reference(ref, ref), ref, atol=1e-15)
    np.testing.assert_allclose(rescale_to_reference(2 * ref + 5, ref), ref, atol=1e-12)
    g = np.random.default_rng(3).normal(size=200)
    out = rescale_to_reference(g, ref)
    assert abs(out.mean() - ref.mean()) < 1e-12
    assert np.ptp(out) == pytest.approx(np.ptp(ref))
    with pytest.raises(ValueError):
        rescale_to_reference(np.ones(5), ref[:5])


# --- demodulation ------------------------------------------------------------------


def test_demod_tone_identity():
    env = demodulate_envelope(tone(CARRIER, 0.37), FS, CARRIER)
    steady = env[env.size // 2 :]
    assert np.all(np.abs(steady / 0.37 - 1) < 0.01)


def test_demod_rejects_feedthrough():
    env = demodulate_envelope(tone(FD, 1.0), FS, CARRIER)
    assert np.max(env[env.size // 2 :]) < 0.01


def test_demod_zero_and_rate_check():
    assert np.all(demodulate_envelope(np.zeros(1000), FS, CARRIER) == 0)
    with pytest.raises(ValueError):
        demodulate_envelope(np.zeros(10), 5 * CARRIER, CARRIER)


@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_demod_linearity(a, seed):
    rng = np.random.default_rng(seed)
    s = tone(CARRIER, 1.0) * (1 + 0.3 * np.sin(2 * np.pi * 7e3 * np.arange(int(400e-6 * FS)) / FS))
    s = s + 0.1 * rng.normal(size=s.size)
    e1 = demodulate_envelope(s, FS, CARRIER)
    e2 = demodulate_envelope(a * s, FS, CARRIER)
    np.testing.assert_allclose(e2, a * e1, rtol=1e-9, atol=1e-12 * a)


def test_streaming_demodulator_matches_offline():
    # the fused integrator/demodulator must agree with the reference chain on its own trace
    drive = DriveConfig(n_nodes=10)
    eng = _Engine(Physics(), drive, AcquisitionConfig(), 24)
    steps = eng.grid.steps_per_slot
    v = np.linspace(60.0, 200.0, 10)
    trace = np.zeros(10 * steps)
    env = eng.run(v, np.zeros(10), trace)
    ref = demodulate_envelope(trace, eng.grid.sample_rate, 2 * drive.fd)
    np.testing.assert_allclose(env, ref[np.arange(1, 11) * steps - 1], rtol=1e-9)


# --- ADC ----------------------------------------------------------------------------


@given(st.floats(0, 1.0), st.floats(1e-3, 10.0))
def test_quantizer_bound(v, fs):
    q = quantize(np.array([v * fs]), fs, 16)[0]
    assert abs(q - v * fs) <= fs / 2**16


def test_quantizer_one_bit_and_clip():
    assert quantize(np.array([0.6]), 1.0, 1)[0] == 1.0
    assert quantize(np.array([0.4]), 1.0, 1)[0] == 0.0
    np.testing.assert_array_equal(quantize(np.array([-1.0, 5.0]), 2.0, 8), [0.0, 2.0])


def test_adc_sample_count_and_position(caplog):
    fs = 1e6
    env = np.arange(int(5e-3 * fs) * 2) / 1e4  # two full periods, slowly rising
    out = adc_sample(env, fs, 50e-6, 100, full_scale=100.0)
    assert out.shape == (2, 100)
    assert out[0, 0] == pytest.approx(env[49], abs=100 / 2**16)
    with caplog.at_level(logging.WARNING):
        adc_sample(env, fs, 50e-6, 100, full_scale=0.5)
    assert "clipping" in caplog.text
    with pytest.raises(ValueError):
        adc_sample(env[:100], fs, 50e-6, 100, full_scale=1.0)


def test_slot_grid_integer_steps():
    g = SlotGrid(245e3, 50e-6, 256)
    assert g.steps_per_slot == 6272
    assert SlotGrid(245e3, 50e-6, 48).steps_per_slot == 1176
    with pytest.raises(ValueError):
        SlotGrid(245e3, 50e-6, 7)
