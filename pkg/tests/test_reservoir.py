import json

import numpy as np
import pytest

from neuroaccel.dynamics import Physics, SystemState
from neuroaccel.learning import fit_readout, nrmse, predict
from neuroaccel.reservoir import (
    ReservoirRun,
    RunSettings,
    measured_input,
    rescale_measured_input,
    run_reservoir,
)
from neuroaccel.signal_chain import AcquisitionConfig, DriveConfig, ShakerModel

# 48 steps per forcing period keeps these runs to seconds; the physics is the same.
SETTINGS = RunSettings(washout=50, steps_per_period=48)


def shaker(drive, mode="filtered"):
    return ShakerModel.default(sample_rate=1 / drive.theta, mode=mode)


@pytest.fixture(scope="module")
def white_input():
    return np.random.default_rng(1).uniform(0, 0.5, 160)


@pytest.fixture(scope="module")
def paper_run(white_input):
    d = DriveConfig()
    return run_reservoir(white_input, drive=d, shaker=shaker(d), settings=SETTINGS)


def test_shape_and_bias(paper_run, white_input):
    assert paper_run.states.shape == (white_input.size - 50, 101)
    assert np.all(paper_run.states[:, -1] == 1.0)
    assert np.all(np.isfinite(paper_run.states))
    np.testing.assert_array_equal(paper_run.inputs_setpoint, white_input[50:])


def test_bit_identical_rerun(paper_run, white_input):
    d = DriveConfig()
    again = run_reservoir(white_input, drive=d, shaker=shaker(d), settings=SETTINGS)
    assert np.array_equal(again.states, paper_run.states)
    assert np.array_equal(again.inputs_measured, paper_run.inputs_measured)


@pytest.mark.parametrize(
    "initial",
    [
        SystemState(),
        SystemState(beam_displacement=1e-7, beam_velocity=0.5, mass_displacement=1e-6),
        SystemState(beam_displacement=-2e-7, beam_velocity=-1.0, mass_displacement=-2e-6),
    ],
)
def test_fading_memory(paper_run, white_input, initial):
    d = DriveConfig()
    other = run_reservoir(white_input, drive=d, shaker=shaker(d), settings=SETTINGS, initial_state=initial)
    diff = np.abs(other.node_states - paper_run.node_states).max()
    assert diff < 0.01 * np.abs(paper_run.node_states).max()


def test_neighbouring_nodes_correlate(paper_run):
    X = paper_run.node_states
    c = [np.corrcoef(X[:, i], X[:, i - 1])[0, 1] for i in range(1, X.shape[1])]
    assert np.mean(c) > 0


def test_autonomous_rows_identical():
    d = DriveConfig(alpha=0.0, mask_low=0.6, mask_high=0.6)
    run = run_reservoir(np.zeros(80), drive=d, shaker=shaker(d, "ideal"), settings=SETTINGS)
    X = run.node_states[-10:]
    assert np.max(np.abs(X - X[0])) <= 1e-6 * np.max(X)


def test_feedback_adds_memory():
    u = np.random.default_rng(3).uniform(0, 0.5, 650)
    err = {}
    for alpha in (0.0, 1.2):
        d = DriveConfig(alpha=alpha)
        r = run_reservoir(u, drive=d, shaker=shaker(d, "ideal"), settings=SETTINGS)
        past = r.full_inputs("setpoint")[r.washout - 1 : -1]  # u(k-1) for each row
        m = fit_readout(r.states[:450], past[:450], 1e-6)
        err[alpha] = nrmse(predict(m, r.states[450:]), past[450:])[0][0]
    assert err[1.2] < err[0.0]


def test_save_load_roundtrip(tmp_path, paper_run):
    files = paper_run.save(tmp_path / "run", "deadbeef")
    assert {p.name for p in files} == {"states.csv", "inputs.csv", "run.json"}
    for p in files[:2]:
        assert p.read_text().splitlines()[0] == "# config_hash=deadbeef"
    assert json.loads(files[2].read_text())["config_hash"] == "deadbeef"
    back = ReservoirRun.load(tmp_path / "run")
    np.testing.assert_array_equal(back.states, paper_run.states)
    np.testing.assert_array_equal(back.full_inputs("measured"), paper_run.full_inputs("measured"))


def test_rescale_measured_input_examples():
    ref = np.random.default_rng(0).uniform(0, 0.5, 100)
    np.testing.assert_allclose(rescale_measured_input(2 * ref + 5, ref), ref, atol=1e-12)
    with pytest.raises(ValueError):
        rescale_measured_input(np.zeros(4), ref[:4])


def test_measured_input_shapes():
    d = DriveConfig(n_nodes=10)
    u = np.random.default_rng(0).uniform(0, 0.5, 30)
    accel, meas = measured_input(u, d, shaker(d, "ideal"))
    assert accel.shape == (30, 10)
    np.testing.assert_allclose(accel[:, 0], u * d.input_gain)
    np.testing.assert_allclose(meas, u, atol=1e-12)
    with pytest.raises(ValueError):
        measured_input(u, d, ShakerModel.default(sample_rate=1e3))


def test_run_validation():
    with pytest.raises(ValueError):
        run_reservoir(np.zeros(10), settings=SETTINGS)
    with pytest.raises(ValueError):
        run_reservoir(np.full(100, np.nan), settings=SETTINGS)


def test_noise_changes_states_reproducibly(white_input):
    d = DriveConfig()
    acq = AcquisitionConfig(noise_sigma=0.01, noise_seed=4)
    a = run_reservoir(white_input, drive=d, acquisition=acq, shaker=shaker(d), settings=SETTINGS)
    b = run_reservoir(white_input, drive=d, acquisition=acq, shaker=shaker(d), settings=SETTINGS)
    assert np.array_equal(a.states, b.states)


def test_pull_in_is_reported():
    from neuroaccel.errors import GapCollapseError

    d = DriveConfig(v0=2000.0)
    with pytest.raises(GapCollapseError):
        run_reservoir(np.zeros(60), physics=Physics(), drive=d, shaker=shaker(d), settings=SETTINGS)
