"""Signal path around the resonator: input scaling, shaker emulation, mask,
drive synthesis, envelope demodulation and ADC sampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .constants import BEAM_F0_MEASURED, BEAM_Q_MEASURED, G, TWO_PI

log = logging.getLogger(__name__)

DEFAULT_RING_DOWN = 2.0 * BEAM_Q_MEASURED / (TWO_PI * BEAM_F0_MEASURED)


@dataclass
class DriveConfig:
    """Reservoir operating point.

    Attributes:
        v0: drive amplitude scale (V).
        fd: drive frequency (Hz); the beam responds at 2*fd.
        mask_low, mask_high: the two mask weights.
        alpha: feedback gain, volts of drive per volt of sampled envelope.
        theta: virtual-node slot duration (s).
        n_nodes: virtual nodes per delay period.
        input_gain: proof-mass acceleration per unit task input (m/s^2).
        mask_seed: seed of the random mask.
    """

    v0: float = 135.0
    fd: float = 245e3
    mask_low: float = 0.45
    mask_high: float = 0.7
    alpha: float = 1.2
    theta: float = 50e-6
    n_nodes: int = 100
    input_gain: float = 4.0 * G
    mask_seed: int = 0

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise ValueError("n_nodes must be an integer >= 1")
        if not (self.v0 >= 0 and self.fd > 0):
            raise ValueError("v0 must be >= 0 and fd > 0")
        self.n_nodes = int(self.n_nodes)

    @property
    def tau(self) -> float:
        return self.n_nodes * self.theta

    def check_theta(self, ring_down: float = DEFAULT_RING_DOWN) -> bool:
        """False (with a warning) when slots are much longer than the beam ring-down."""
        if self.theta > 2.0 * ring_down:
            log.warning(
                "theta = %.3g s exceeds twice the ring-down time %.3g s; nodes decouple",
                self.theta,
                ring_down,
            )
            return False
        return True


@dataclass
class AcquisitionConfig:
    """Demodulator and ADC settings.

    ``transduction_gain`` converts beam amplitude (m) to the envelope voltage
    seen by the ADC and fed back. ``full_scale=None`` means calibrate:
    ``fs_multiplier`` times the largest envelope of a feedback-free run.
    """

    transduction_gain: float = 1.5e6
    bits: int = 16
    full_scale: float | None = None
    fs_multiplier: float = 1.5
    bandpass_width: float = 80e3
    lowpass_cutoff: float = 40e3
    filter_order: int = 2
    noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.full_scale is not None and not self.full_scale > 0:
            raise ValueError("full_scale must be positive")
        if not (self.transduction_gain > 0 and self.fs_multiplier > 0):
            raise ValueError("gains must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class MaskSequence:
    values: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.values)


def generate_mask(config: DriveConfig) -> MaskSequence:
    """Two-level random mask, each node independently low or high with probability 1/2."""
    rng = np.random.default_rng(config.mask_seed)
    pick = rng.random(config.n_nodes) < 0.5
    values = np.where(pick, config.mask_low, config.mask_high)
    values.setflags(write=False)
    return MaskSequence(values=values, seed=config.mask_seed)


# --- shaker -----------------------------------------------------------------


def _lowpass2(f: float, q: float, fs: float) -> np.ndarray:
    w = TWO_PI * f
    b, a = signal.bilinear([w * w], [1.0, w / q, w * w], fs)
    return signal.tf2sos(b, a)


def _bandpass2(f: float, q: float, fs: float) -> np.ndarray:
    w = TWO_PI * f
    b, a = signal.bilinear([0.0, w / q, 0.0], [1.0, w / q, w * w], fs)
    return signal.tf2sos(b, a)


def _highpass1(f: float, fs: float) -> np.ndarray:
    w = TWO_PI * f
    b, a = signal.bilinear([1.0, 0.0], [1.0, w], fs)
    return signal.tf2sos(b, a)


@dataclass
class ShakerModel:
    """Linear shaker response plus a soft displacement limit.

    The main path ``sos`` and the optional slow ``drift_sos`` branch (added
    with weight ``drift_gain``; low-frequency tracking error of the
    controller) run at ``sample_rate``, one sample per virtual-node slot.
    ``mode="ideal"`` bypasses everything.
    """

    sos: np.ndarray
    sample_rate: float
    travel_limit: float = 13e-3
    mode: str = "filtered"
    centering_hz: float = 5.0  # position-hold bandwidth of the table controller
    drift_sos: np.ndarray | None = None
    drift_gain: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("ideal", "filtered"):
            raise ValueError(f"unknown shaker mode {self.mode!r}")
        self.sos = self._checked(self.sos)
        if self.drift_sos is not None:
            self.drift_sos = self._checked(self.drift_sos)

    @staticmethod
    def _checked(sos) -> np.ndarray:
        sos = np.atleast_2d(np.asarray(sos, dtype=float))
        if sos.shape[1] != 6:
            raise ValueError("sos must have 6 columns")
        poles = np.concatenate([np.roots(s[3:]) for s in sos])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("shaker filter is unstable")
        return sos

    def poles(self) -> np.ndarray:
        parts = [self.sos] if self.drift_sos is None else [self.sos, self.drift_sos]
        return np.concatenate([np.roots(s[3:]) for sos in parts for s in sos])

    @classmethod
    def default(
        cls,
        sample_rate: float = 20e3,
        mode: str = "filtered",
        sections=((60.0, 0.7), (150.0, 0.7)),
        dc_block_hz: float = 2.0,
        drift=None,
        travel_limit: float = 13e-3,
        centering_hz: float = 5.0,
    ) -> "ShakerModel":
        """Two second-order low-pass sections and a first-order DC block on the
        main path. ``drift=(f, q, gain)`` adds a weak band-pass branch that keeps
        samples correlated over a few tens of steps (off by default)."""
        parts = [_lowpass2(f, q, sample_rate) for f, q in sections]
        if dc_block_hz > 0:
            parts.append(_highpass1(dc_block_hz, sample_rate))
        drift_sos, drift_gain = None, 0.0
        if drift is not None and drift[2] != 0:
            drift_sos, drift_gain = _bandpass2(drift[0], drift[1], sample_rate), float(drift[2])
        return cls(
            np.vstack(parts),
            sample_rate,
            travel_limit,
            mode,
            centering_hz=centering_hz,
            drift_sos=drift_sos,
            drift_gain=drift_gain,
        )


def shaker_transform(setpoint, model: ShakerModel) -> np.ndarray:
    """Acceleration actually delivered for a sampled acceleration setpoint (m/s^2)."""
    x = np.asarray(setpoint, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("setpoint must be finite")
    if model.mode == "ideal":
        return x.copy()
    a = signal.sosfilt(model.sos, x)
    if model.drift_sos is not None:
        a = a + model.drift_gain * signal.sosfilt(model.drift_sos, x)
    # Table position from leaky double integration, soft-limited with tanh.
    # The position excess goes back through the exact inverse of the
    # integrator, so re-integrating the output gives the limited position.
    dt = 1.0 / model.sample_rate
    leak = math.exp(-TWO_PI * model.centering_hz * dt)
    integ = ([dt], [1.0, -leak])
    pos = signal.lfilter(*integ, signal.lfilter(*integ, a))
    lim = model.travel_limit
    excess = lim * np.tanh(pos / lim) - pos
    inverse = ([1.0 / dt, -leak / dt], [1.0])
    return a + signal.lfilter(*inverse, signal.lfilter(*inverse, excess))


def rescale_to_reference(measured, reference) -> np.ndarray:
    """Affine map giving ``measured`` the mean and peak-to-peak span of ``reference``."""
    m = np.asarray(measured, dtype=float)
    r = np.asarray(reference, dtype=float)
    span = np.ptp(m)
    if not span > 0 or not np.isfinite(span):
        raise ValueError("measured input has zero variance")
    centered = (m - m.mean()) * (np.ptp(r) / span)
    return centered + r.mean()


# --- drive ------------------------------------------------------------------


def drive_envelope(mask: MaskSequence, feedback, config: DriveConfig) -> np.ndarray:
    """Per-slot carrier amplitude ``v0 (mask + alpha * feedback + 1)``."""
    fb = np.asarray(feedback, dtype=float)
    env = config.v0 * (mask.values + config.alpha * fb + 1.0)
    if np.any(env < 0):
        raise ValueError("negative drive envelope; check mask, alpha and feedback ranges")
    return env


def slot_index(t: float, config: DriveConfig) -> int:
    return int(math.floor(t / config.theta + 1e-9)) % config.n_nodes


def synthesize_drive(mask: MaskSequence, feedback, config: DriveConfig, t: float) -> float:
    """Instantaneous drive voltage at time ``t``.

    ``feedback`` holds the per-node envelope samples of the previous delay
    period (``None`` or zeros during the first one).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    i = slot_index(t, config)
    fb = 0.0 if feedback is None else float(np.asarray(feedback)[i])
    amp = config.v0 * (mask.values[i] + config.alpha * fb + 1.0)
    return amp * math.cos(TWO_PI * config.fd * t)


# --- demodulation and ADC ----------------------------------------------------


def demod_filters(sample_rate: float, carrier_freq: float, acq: AcquisitionConfig | None = None):
    """(band-pass sos, low-pass sos) used by both the streaming and offline demodulators."""
    acq = acq or AcquisitionConfig()
    half = acq.bandpass_width / 2.0
    bp = signal.butter(
        acq.filter_order,
        [carrier_freq - half, carrier_freq + half],
        btype="bandpass",
        fs=sample_rate,
        output="sos",
    )
    lp = signal.butter(acq.filter_order, acq.lowpass_cutoff, fs=sample_rate, output="sos")
    return bp, lp


def demodulate_envelope(waveform, sample_rate: float, carrier_freq: float, acq: AcquisitionConfig | None = None):
    """Amplitude envelope of the component of ``waveform`` near ``carrier_freq``.

    Band-pass, quadrature mix to baseband, low-pass, magnitude.
    """
    x = np.asarray(waveform, dtype=float)
    if sample_rate < 10 * carrier_freq:
        raise ValueError("waveform must be sampled at >= 10x the carrier frequency")
    bp, lp = demod_filters(sample_rate, carrier_freq, acq)
    w = signal.sosfilt(bp, x)
    t = np.arange(x.size) / sample_rate
    i = signal.sosfilt(lp, w * np.cos(TWO_PI * carrier_freq * t))
    q = signal.sosfilt(lp, w * np.sin(TWO_PI * carrier_freq * t))
    return 2.0 * np.hypot(i, q)


def quantize(values, full_scale: float, bits: int) -> np.ndarray:
    """Round to the nearest of ``2**bits`` levels spanning [0, full_scale], clipping outside."""
    v = np.asarray(values, dtype=float)
    levels = (1 << bits) - 1
    lsb = full_scale / levels
    return np.clip(np.rint(v / lsb), 0, levels) * lsb


def adc_sample(envelope, sample_rate: float, theta: float, n_nodes: int, full_scale: float, bits: int = 16):
    """Sample the envelope at the end of each slot and quantize.

    Returns an array of shape (periods, n_nodes).
    """
    env = np.asarray(envelope, dtype=float)
    per_slot = theta * sample_rate
    n_slots = int(math.floor(env.size / per_slot + 1e-9))
    n_periods = n_slots // n_nodes
    if n_periods < 1:
        raise ValueError("envelope shorter than one delay period")
    ends = np.rint((np.arange(n_periods * n_nodes) + 1) * per_slot).astype(int) - 1
    raw = env[ends]
    clipped = np.mean(raw >= full_scale)
    if clipped > 0.01:
        log.warning("ADC clipping on %.1f%% of samples", 100 * clipped)
    return quantize(raw, full_scale, bits).reshape(n_periods, n_nodes)


@dataclass
class SlotGrid:
    """Integer time grid shared by the integrator and the demodulator."""

    fd: float
    theta: float
    steps_per_period: int  # per period of the 2*fd forcing
    cos_half: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        drive_steps = 2 * self.steps_per_period
        self.cos_half = np.cos(np.pi * np.arange(2 * drive_steps) / drive_steps)
        if abs(self.steps_per_slot_exact - round(self.steps_per_slot_exact)) > 1e-6:
            raise ValueError("theta is not a whole number of integrator steps at this resolution")

    @property
    def dt(self) -> float:
        return 1.0 / (2.0 * self.fd * self.steps_per_period)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def steps_per_slot_exact(self) -> float:
        return self.theta / self.dt

    @property
    def steps_per_slot(self) -> int:
        return int(round(self.steps_per_slot_exact))
