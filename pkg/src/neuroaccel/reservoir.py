"""Time-multiplexed delay reservoir built around the coupled beam/mass system.

Each task sample is held as the shaker setpoint for one delay period. Within
the period the drive amplitude steps through the mask, one slot per virtual
node, with the envelope sample of the same node one period earlier fed back.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .dynamics import DEFAULT_STEPS_PER_PERIOD, Physics, SystemState, raise_for_status
from .signal_chain import (
    AcquisitionConfig,
    DriveConfig,
    ShakerModel,
    SlotGrid,
    demod_filters,
    drive_envelope,
    generate_mask,
    quantize,
    rescale_to_reference,
    shaker_transform,
)

log = logging.getLogger(__name__)


@dataclass
class RunSettings:
    washout: int = 200
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD
    ramp_periods: int = 10
    calibration_periods: int = 30
    record_trace_periods: int = 0  # debug: keep the raw beam waveform of the first periods


@dataclass
class ReservoirRun:
    states: np.ndarray  # M x (N+1), last column is the bias
    inputs_setpoint: np.ndarray
    inputs_measured: np.ndarray
    drive: DriveConfig
    washout: int
    full_scale: float
    clip_fraction: float
    mask: np.ndarray
    washout_setpoint: np.ndarray = field(default_factory=lambda: np.zeros(0))
    washout_measured: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trace: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.states.shape[0] != len(self.inputs_setpoint) or self.states.shape[0] != len(self.inputs_measured):
            raise ValueError("states and inputs disagree in length")
        if not np.all(self.states[:, -1] == 1.0):
            raise ValueError("bias column must be 1")

    @property
    def node_states(self) -> np.ndarray:
        return self.states[:, :-1]

    def full_inputs(self, source: str = "measured") -> np.ndarray:
        """Inputs including the washout prefix, for targets that need history."""
        if source == "measured":
            return np.concatenate([self.washout_measured, self.inputs_measured])
        if source == "setpoint":
            return np.concatenate([self.washout_setpoint, self.inputs_setpoint])
        raise ValueError(f"unknown input source {source!r}")

    def save(self, directory: str | Path, config_hash: str = "") -> list[Path]:
        """Write states CSV, inputs CSV and run metadata JSON."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        header = f"config_hash={config_hash}"
        n = self.states.shape[1] - 1
        p_states = d / "states.csv"
        np.savetxt(
            p_states,
            self.states,
            delimiter=",",
            header=header + "\n" + ",".join([f"node{i}" for i in range(n)] + ["bias"]),
            fmt="%.17g",
        )
        p_inputs = d / "inputs.csv"
        w = self.washout_setpoint.size
        np.savetxt(
            p_inputs,
            np.column_stack(
                [
                    self.full_inputs("setpoint"),
                    self.full_inputs("measured"),
                    np.arange(-w, self.inputs_setpoint.size) >= 0,
                ]
            ),
            delimiter=",",
            header=header + "\nsetpoint,measured,after_washout",
            fmt="%.17g",
        )
        p_meta = d / "run.json"
        meta = {
            "config_hash": config_hash,
            "drive": asdict(self.drive),
            "washout": self.washout,
            "full_scale": self.full_scale,
            "clip_fraction": self.clip_fraction,
            "mask": self.mask.tolist(),
        }
        p_meta.write_text(json.dumps(meta, indent=2))
        return [p_states, p_inputs, p_meta]

    @classmethod
    def load(cls, directory: str | Path) -> "ReservoirRun":
        d = Path(directory)
        states = np.atleast_2d(np.loadtxt(d / "states.csv", delimiter=","))
        inputs = np.atleast_2d(np.loadtxt(d / "inputs.csv", delimiter=","))
        meta = json.loads((d / "run.json").read_text())
        keep = inputs[:, 2] > 0
        return cls(
            states=states,
            inputs_setpoint=inputs[keep, 0],
            inputs_measured=inputs[keep, 1],
            washout_setpoint=inputs[~keep, 0],
            washout_measured=inputs[~keep, 1],
            drive=DriveConfig(**meta["drive"]),
            washout=meta["washout"],
            full_scale=meta["full_scale"],
            clip_fraction=meta["clip_fraction"],
            mask=np.asarray(meta["mask"]),
        )


def rescale_measured_input(measured, reference) -> np.ndarray:
    """Map measured acceleration samples onto the mean and span of the original inputs."""
    return rescale_to_reference(measured, reference)


def measured_input(u, drive: DriveConfig, shaker: ShakerModel | None = None):
    """Per-step acceleration the proof mass actually receives and its rescaled copy.

    Returns ``(accel, measured)`` with ``accel`` shaped (steps, n_nodes) in
    m/s^2 and ``measured`` the window means mapped onto the mean and span of
    ``u``.
    """
    u = np.asarray(u, dtype=float)
    if shaker is None:
        shaker = ShakerModel.default(sample_rate=1.0 / drive.theta)
    elif abs(shaker.sample_rate * drive.theta - 1.0) > 1e-9:
        raise ValueError("shaker sample rate must be one sample per slot")
    n = drive.n_nodes
    accel = shaker_transform(np.repeat(u * drive.input_gain, n), shaker).reshape(u.size, n)
    measured = rescale_measured_input(accel.mean(axis=1), u) if np.ptp(u) > 0 else u.copy()
    return accel, measured


class _Engine:
    """Integrator plus demodulator state, carried across calls."""

    def __init__(self, physics: Physics, drive: DriveConfig, acq: AcquisitionConfig, spp: int):
        self.grid = SlotGrid(drive.fd, drive.theta, spp)
        self.prm = physics.kernel_params()
        self.bp, self.lp = demod_filters(self.grid.sample_rate, 2.0 * drive.fd, acq)
        self.state = np.zeros(4)
        self.z_bp = np.zeros((self.bp.shape[0], 2))
        self.z_i = np.zeros((self.lp.shape[0], 2))
        self.z_q = np.zeros((self.lp.shape[0], 2))
        self.phase = 0
        self.n_slots = 0
        self.no_trace = np.zeros(0)

    def snapshot(self):
        return (
            self.state.copy(),
            self.z_bp.copy(),
            self.z_i.copy(),
            self.z_q.copy(),
            self.phase,
            self.n_slots,
        )

    def restore(self, snap) -> None:
        s, b, i, q, self.phase, self.n_slots = snap
        self.state, self.z_bp, self.z_i, self.z_q = s.copy(), b.copy(), i.copy(), q.copy()

    def run(self, v_env, accel, trace=None) -> np.ndarray:
        """Advance through one slot per entry of ``v_env``; returns the slot-end envelopes (m)."""
        v_env = np.ascontiguousarray(v_env, dtype=float)
        accel = np.ascontiguousarray(accel, dtype=float)
        out = np.empty(v_env.size)
        self.phase, status = K.integrate_slots(
            self.state,
            self.prm,
            self.grid.cos_half,
            self.phase,
            v_env,
            accel,
            self.grid.steps_per_slot,
            self.grid.dt,
            self.bp,
            self.lp,
            self.z_bp,
            self.z_i,
            self.z_q,
            out,
            False,
            self.no_trace if trace is None else trace,
        )
        raise_for_status(status, f" in slot {self.n_slots}")
        self.n_slots += v_env.size
        return out


def run_reservoir(
    task_input,
    physics: Physics | None = None,
    drive: DriveConfig | None = None,
    acquisition: AcquisitionConfig | None = None,
    shaker: ShakerModel | None = None,
    settings: RunSettings | None = None,
    initial_state: SystemState | None = None,
) -> ReservoirRun:
    """Drive the reservoir with ``task_input`` and collect node states.

    The carrier is ramped up without input or feedback, then (if no ADC full
    scale is set) a feedback-free calibration pass over the first inputs fixes
    the full scale; the physics is rewound before the real run starts.
    ``initial_state`` overrides the beam/mass state at the start of the real
    run. Rows before ``settings.washout`` are discarded.
    """
    physics = physics or Physics()
    drive = drive or DriveConfig()
    acq = acquisition or AcquisitionConfig()
    settings = settings or RunSettings()
    u = np.asarray(task_input, dtype=float)
    if u.ndim != 1 or not np.all(np.isfinite(u)):
        raise ValueError("task_input must be a finite 1-D sequence")
    if u.size <= settings.washout:
        raise ValueError(f"need more than {settings.washout} samples, got {u.size}")
    drive.check_theta(physics.beam.ring_down)

    n = drive.n_nodes
    mask = generate_mask(drive)
    eng = _Engine(physics, drive, acq, settings.steps_per_period)

    accel, measured = measured_input(u, drive, shaker)

    # carrier ramp from rest, no feedback, no input
    idle = np.zeros(n)
    base = drive_envelope(mask, idle, drive)
    for r in range(settings.ramp_periods):
        eng.run(base * (r + 1) / settings.ramp_periods, idle)

    full_scale = acq.full_scale
    if full_scale is None:
        snap = eng.snapshot()
        peak = 0.0
        for k in range(min(settings.calibration_periods, u.size)):
            peak = max(peak, eng.run(base, accel[k]).max())
        eng.restore(snap)
        full_scale = acq.fs_multiplier * peak * acq.transduction_gain
        if not full_scale > 0:
            raise ValueError("calibration produced a zero envelope; cannot set ADC range")

    if initial_state is not None:
        eng.state[:] = initial_state.as_array()

    trace = None
    if settings.record_trace_periods > 0:
        trace = np.zeros(settings.record_trace_periods * n * eng.grid.steps_per_slot)
    per_period = n * eng.grid.steps_per_slot

    rng = np.random.default_rng(acq.noise_seed)
    X = np.empty((u.size, n))
    fb = np.zeros(n)
    rails = 0
    for k in range(u.size):
        tr = trace[k * per_period : (k + 1) * per_period] if k < settings.record_trace_periods else None
        env = eng.run(drive_envelope(mask, fb, drive), accel[k], tr) * acq.transduction_gain
        if acq.noise_sigma > 0:
            env = env + rng.normal(0.0, acq.noise_sigma, n)
        fb = quantize(env, full_scale, acq.bits)
        rails += int(np.count_nonzero(env >= full_scale))
        X[k] = fb
    clip = rails / X.size
    if clip > 0.01:
        log.warning("ADC clipping on %.1f%% of node samples", 100 * clip)

    w = settings.washout
    states = np.hstack([X[w:], np.ones((u.size - w, 1))])
    return ReservoirRun(
        states=states,
        inputs_setpoint=u[w:].copy(),
        inputs_measured=measured[w:],
        drive=drive,
        washout=w,
        full_scale=float(full_scale),
        clip_fraction=float(clip),
        mask=np.asarray(mask.values),
        washout_setpoint=u[:w].copy(),
        washout_measured=measured[:w].copy(),
        trace=trace,
    )
