"""Coupled beam / proof-mass dynamics and characterization sweeps.

The beam is a Duffing oscillator forced by the parallel-plate attraction of
the drive voltage across a gap that both the beam and the proof mass close.
The proof mass only sees the carrier-averaged part of that force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import _kernels as K
from .constants import (
    BEAM_BETA_FITTED,
    BEAM_F0_MEASURED,
    BEAM_Q_MEASURED,
    EPS0,
    MASS_F0_MEASURED,
    MASS_Q_MEASURED,
    TWO_PI,
)
from .design import BeamGeometry
from .errors import GapCollapseError, NumericOverflowError

DEFAULT_STEPS_PER_PERIOD = 256
SUSPENSION_STIFFNESS = 3.4  # N/m, two accordion springs


@dataclass(frozen=True)
class BeamParams:
    """Duffing beam and drive electrode.

    ``coupling`` scales the ideal parallel-plate force to the part that
    actually drives the fundamental mode (electrode overlap, mode shape,
    fringing).
    """

    omega0: float = TWO_PI * BEAM_F0_MEASURED
    q_factor: float = BEAM_Q_MEASURED
    beta: float = BEAM_BETA_FITTED
    effective_mass: float = field(default_factory=lambda: BeamGeometry().modal_mass)
    rest_gap: float = 8e-6
    electrode_area: float = 130e-6 * 50e-6
    coupling: float = 0.12

    def __post_init__(self) -> None:
        for name in ("omega0", "q_factor", "effective_mass", "rest_gap", "electrode_area", "coupling"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if not self.q_factor > 1.0:
            raise ValueError("beam must be underdamped (q_factor > 1)")

    @property
    def ring_down(self) -> float:
        return 2.0 * self.q_factor / self.omega0


@dataclass(frozen=True)
class MassParams:
    mass: float = SUSPENSION_STIFFNESS / (TWO_PI * MASS_F0_MEASURED) ** 2
    stiffness: float = SUSPENSION_STIFFNESS
    q_factor: float = MASS_Q_MEASURED
    travel_limit: float = 5e-6

    def __post_init__(self) -> None:
        for name in ("mass", "stiffness", "q_factor", "travel_limit"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")

    @property
    def omega(self) -> float:
        return math.sqrt(self.stiffness / self.mass)

    @property
    def natural_frequency(self) -> float:
        return self.omega / TWO_PI


@dataclass(frozen=True)
class Physics:
    beam: BeamParams = field(default_factory=BeamParams)
    mass: MassParams = field(default_factory=MassParams)

    def __post_init__(self) -> None:
        if self.mass.travel_limit > self.beam.rest_gap:
            raise ValueError("mass travel limit exceeds the rest gap")

    def kernel_params(self) -> np.ndarray:
        b, m = self.beam, self.mass
        eff_area = b.coupling * EPS0 * b.electrode_area
        return np.array(
            [
                b.omega0,
                b.omega0 / b.q_factor,
                b.beta,
                eff_area / (2.0 * b.effective_mass),
                b.rest_gap,
                m.stiffness / m.mass,
                m.omega / m.q_factor,
                eff_area / (4.0 * m.mass),
                m.travel_limit,
            ]
        )

    def static_mass_offset(self, v_env: float) -> float:
        """Mass equilibrium under the carrier-averaged force of amplitude ``v_env``."""
        b = self.beam
        f = b.coupling * EPS0 * b.electrode_area * v_env**2 / (4.0 * b.rest_gap**2)
        return min(f / self.mass.stiffness, self.mass.travel_limit)


@dataclass
class SystemState:
    beam_displacement: float = 0.0
    beam_velocity: float = 0.0
    mass_displacement: float = 0.0  # positive closes the gap
    mass_velocity: float = 0.0
    time: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.beam_displacement, self.beam_velocity, self.mass_displacement, self.mass_velocity]
        )

    @classmethod
    def from_array(cls, a, time: float) -> "SystemState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), time)


@dataclass
class SweepResult:
    axis_values: np.ndarray
    amplitude_signal: np.ndarray
    direction: str
    jump_index: int | None = None
    axis_name: str = "frequency_hz"

    def __post_init__(self) -> None:
        self.axis_values = np.asarray(self.axis_values, dtype=float)
        self.amplitude_signal = np.asarray(self.amplitude_signal, dtype=float)
        if self.axis_values.shape != self.amplitude_signal.shape:
            raise ValueError("axis and amplitude lengths differ")
        d = np.diff(self.axis_values)
        if self.direction not in ("up", "down"):
            raise ValueError("direction must be 'up' or 'down'")
        if d.size and not (np.all(d > 0) if self.direction == "up" else np.all(d < 0)):
            raise ValueError("axis values must be strictly monotone in the sweep direction")

    def rows(self):
        for a, v in zip(self.axis_values, self.amplitude_signal):
            yield a, v, self.direction


def electrostatic_force(v_inst, gap, area: float):
    """Parallel-plate attraction (N), positive toward closing the gap."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap <= 0):
        raise GapCollapseError(f"gap {np.min(gap):.3g} m <= 0 (pull-in)")
    out = EPS0 * area * np.square(v_inst) / (2.0 * gap * gap)
    return float(out) if np.ndim(out) == 0 else out


def _derivs(s, t, phys: Physics, drive, accel, drive_env):
    b, m = phys.beam, phys.mass
    y, v, x, u = s
    gap = b.rest_gap - x - y
    if gap <= 0:
        raise GapCollapseError(f"gap {gap:.3g} m <= 0 at t={t:.6g} s")
    fe = b.coupling * electrostatic_force(drive(t), gap, b.electrode_area)
    ay = -b.omega0 / b.q_factor * v - b.omega0**2 * y - b.beta * y**3 + fe / b.effective_mass
    env = drive_env(t) if drive_env is not None else 0.0
    f_dc = b.coupling * EPS0 * b.electrode_area * env**2 / (4.0 * b.rest_gap**2)
    ax = -m.omega / m.q_factor * u - m.omega**2 * x + accel(t) + f_dc / m.mass
    return np.array([v, ay, u, ax])


def step_system(
    state: SystemState,
    phys: Physics,
    drive: Callable[[float], float],
    external_accel: Callable[[float], float],
    dt: float,
    drive_envelope: Callable[[float], float] | None = None,
) -> SystemState:
    """One classical RK4 step of the coupled system.

    ``drive(t)`` is the instantaneous voltage seen by the beam,
    ``drive_envelope(t)`` its carrier amplitude (for the averaged force on the
    mass; ``None`` means no averaged force).
    """
    s = state.as_array()
    if not np.all(np.isfinite(s)):
        raise NumericOverflowError("non-finite state")
    t = state.time
    k1 = _derivs(s, t, phys, drive, external_accel, drive_envelope)
    k2 = _derivs(s + 0.5 * dt * k1, t + 0.5 * dt, phys, drive, external_accel, drive_envelope)
    k3 = _derivs(s + 0.5 * dt * k2, t + 0.5 * dt, phys, drive, external_accel, drive_envelope)
    k4 = _derivs(s + dt * k3, t + dt, phys, drive, external_accel, drive_envelope)
    s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    lim = phys.mass.travel_limit
    if s[2] > lim:
        s[2], s[3] = lim, 0.0
    elif s[2] < -lim:
        s[2], s[3] = -lim, 0.0
    if np.any(np.abs(s) > np.array([1.0, 1e7, 1.0, 1e7])) or not np.all(np.isfinite(s)):
        raise NumericOverflowError("state magnitude exceeded limits")
    if phys.beam.rest_gap - s[0] - s[2] <= 0:
        raise GapCollapseError("gap closed")
    return SystemState.from_array(s, t + dt)


def raise_for_status(status: int, where: str = "") -> None:
    if status == K.GAP_COLLAPSE:
        raise GapCollapseError(f"electrode gap collapsed (pull-in){where}")
    if status == K.OVERFLOW:
        raise NumericOverflowError(f"state magnitude exceeded limits{where}")


@dataclass
class SweepSettings:
    settle_cycles: int | None = None  # forcing periods before measuring; default 8Q
    measure_cycles: int | None = None  # default 2Q
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD

    def resolve(self, q: float) -> tuple[int, int]:
        settle = self.settle_cycles if self.settle_cycles is not None else int(math.ceil(8 * q))
        meas = self.measure_cycles if self.measure_cycles is not None else int(math.ceil(2 * q))
        return settle, meas


def _largest_jump(amp: np.ndarray, rel_threshold: float = 0.2) -> int | None:
    if amp.size < 2:
        return None
    d = np.abs(np.diff(amp))
    i = int(np.argmax(d))
    scale = max(np.max(np.abs(amp)), 1e-300)
    return i + 1 if d[i] > rel_threshold * scale else None


def _sweep(phys, points, drive_for, mass_for, settings):
    prm = phys.kernel_params()
    settle, meas = settings.resolve(phys.beam.q_factor)
    state = np.zeros(4)
    amps = np.empty(len(points))
    for i, p in enumerate(points):
        fd, v0 = drive_for(p)
        amp, status = K.drive_cycles(
            state, prm, TWO_PI * fd, v0, mass_for(p), settle, meas, settings.steps_per_period
        )
        raise_for_status(status, f" at sweep point {p:g}")
        amps[i] = amp
    return amps


def frequency_sweep(
    phys: Physics,
    v0: float,
    f_range: Sequence[float],
    direction: str = "up",
    settings: SweepSettings | None = None,
) -> SweepResult:
    """Steady-state beam amplitude versus drive frequency ``fd`` (Hz).

    The beam responds at ``2 fd``. Each point starts from the final state of
    the previous one so hysteresis is preserved. The proof mass is held at its
    static offset for ``v0``.
    """
    settings = settings or SweepSettings()
    f = np.sort(np.asarray(f_range, dtype=float))
    if direction == "down":
        f = f[::-1]
    x_m = phys.static_mass_offset(v0)
    amps = _sweep(phys, f, lambda p: (p, v0), lambda p: x_m, settings)
    return SweepResult(f, amps, direction, _largest_jump(amps), "frequency_hz")


def amplitude_sweep(
    phys: Physics,
    fd: float,
    v0_range: Sequence[float],
    direction: str = "up",
    settings: SweepSettings | None = None,
) -> SweepResult:
    """Steady-state beam amplitude versus drive amplitude at fixed ``fd``.

    Before each point the proof mass is moved to its static offset under the
    new drive amplitude.
    """
    settings = settings or SweepSettings()
    v = np.sort(np.asarray(v0_range, dtype=float))
    if direction == "down":
        v = v[::-1]
    amps = _sweep(phys, v, lambda p: (fd, p), phys.static_mass_offset, settings)
    return SweepResult(v, amps, direction, _largest_jump(amps), "voltage_v")


def hysteresis_width(up: SweepResult, down: SweepResult, rel_tol: float = 0.005) -> int:
    """Number of common axis points where the up and down sweeps differ by more than ``rel_tol``."""
    a_up = up.amplitude_signal
    a_dn = dict(zip(down.axis_values, down.amplitude_signal))
    scale = max(np.max(a_up), 1e-300)
    return int(
        sum(abs(a - a_dn[x]) > rel_tol * max(abs(a), abs(a_dn[x]), 1e-3 * scale) for x, a in zip(up.axis_values, a_up) if x in a_dn)
    )


def beam_linear_response(phys: Physics, v0: float, fd: float) -> float:
    """Analytic steady amplitude of the linear (beta = 0) beam driven by the 2*fd force term."""
    b = phys.beam
    gap = b.rest_gap - phys.static_mass_offset(v0)
    f_ac = b.coupling * EPS0 * b.electrode_area * v0**2 / (4.0 * gap**2)
    w = TWO_PI * 2.0 * fd
    den = math.hypot(b.omega0**2 - w**2, b.omega0 * w / b.q_factor)
    return f_ac / b.effective_mass / den


def sensor_frequency_response(
    phys: Physics,
    accel_amplitude: float,
    f_range: Sequence[float],
    transduction: Callable[[float], float] | None = None,
    cycles: int = 60,
    steps_per_cycle: int = 400,
) -> SweepResult:
    """Proof-mass displacement amplitude per unit acceleration versus vibration frequency.

    Integrates the mass alone under ``accel_amplitude * sin(2 pi f t)``.
    ``transduction`` maps displacement amplitude to a readout signal (for
    example the beam-envelope change); the default reports m/(m/s^2).
    """
    m = phys.mass
    w0, g = m.omega, m.omega / m.q_factor
    out = []
    f = np.asarray(f_range, dtype=float)
    if np.any(np.diff(f) <= 0):
        raise ValueError("f_range must be strictly increasing")
    for fv in f:
        w = TWO_PI * fv
        # settle for > 8 mass ring-down times or `cycles` periods, whichever is longer
        n_settle = max(cycles, int(math.ceil(8.0 * m.q_factor / math.pi * fv / m.natural_frequency)))
        x_amp = _forced_mass_amplitude(w0, g, w, accel_amplitude, n_settle, 20, steps_per_cycle, m.travel_limit)
        sig = x_amp if transduction is None else transduction(x_amp)
        out.append(sig / accel_amplitude)
    return SweepResult(f, np.array(out), "up", None, "frequency_hz")


def _forced_mass_amplitude(w0, g, w, a0, n_settle, n_meas, spc, travel):
    """Half peak-to-peak mass displacement under ``a0 sin(w t)``.

    The mass ODE is linear, so each step applies the exact propagator of the
    system augmented with the sinusoidal forcing; only the bumper is nonlinear.
    """
    h = TWO_PI / w / spc
    aug = np.zeros((4, 4))  # state: x, u, sin(wt), cos(wt)
    aug[0, 1] = 1.0
    aug[1, 0] = -w0 * w0
    aug[1, 1] = -g
    aug[1, 2] = a0
    aug[2, 3] = w
    aug[3, 2] = -w
    step = linalg.expm(aug * h)
    s = np.array([0.0, 0.0, 0.0, 1.0])
    xmax, xmin = -np.inf, np.inf
    for n in range((n_settle + n_meas) * spc):
        s = step @ s
        if s[0] > travel:
            s[0], s[1] = travel, 0.0
        elif s[0] < -travel:
            s[0], s[1] = -travel, 0.0
        if n >= n_settle * spc:
            xmax = max(xmax, s[0])
            xmin = min(xmin, s[0])
    return 0.5 * (xmax - xmin)
