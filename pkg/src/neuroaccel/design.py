"""Closed-form design calculators for the proof-mass suspension and the beam.

Everything here is a pure function of its inputs, in SI units.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .constants import (
    AIR_VISCOSITY,
    G,
    SI_DENSITY,
    SI_YOUNGS_MODULUS,
    TWO_PI,
)
from .errors import InvalidGeometryError

# Fundamental clamped-clamped mode: modal mass / physical mass.
CLAMPED_CLAMPED_MODAL_MASS_FACTOR = 0.396


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0.0) or not math.isfinite(value):
            raise InvalidGeometryError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SpringGeometry:
    """Folded accordion spring (one of the two suspension springs).

    Attributes:
        youngs_modulus: Pa.
        member_thickness: in-plane thickness of the flexures (m).
        member_width: out-of-plane width of the flexures (m).
        long_member_length: m.
        short_member_length: m.
        n_parallel: number of identical springs acting in parallel.
    """

    youngs_modulus: float = SI_YOUNGS_MODULUS
    member_thickness: float = 2e-6
    member_width: float = 50e-6
    long_member_length: float = 410e-6
    short_member_length: float = 366e-6
    n_parallel: int = 1

    def __post_init__(self) -> None:
        _require_positive(
            youngs_modulus=self.youngs_modulus,
            member_thickness=self.member_thickness,
            member_width=self.member_width,
            long_member_length=self.long_member_length,
            short_member_length=self.short_member_length,
        )
        if int(self.n_parallel) != self.n_parallel or self.n_parallel < 1:
            raise InvalidGeometryError(f"n_parallel must be an integer >= 1, got {self.n_parallel!r}")


@dataclass(frozen=True)
class BeamGeometry:
    """Clamped-clamped resonator and its electrode gap."""

    length: float = 300e-6
    effective_length: float = 280e-6
    width: float = 50e-6
    thickness: float = 3e-6
    density: float = SI_DENSITY
    youngs_modulus: float = SI_YOUNGS_MODULUS
    gap: float = 8e-6
    electrode_area: float = 130e-6 * 50e-6
    air_viscosity: float = AIR_VISCOSITY

    def __post_init__(self) -> None:
        _require_positive(
            length=self.length,
            effective_length=self.effective_length,
            width=self.width,
            thickness=self.thickness,
            density=self.density,
            gap=self.gap,
            electrode_area=self.electrode_area,
            air_viscosity=self.air_viscosity,
        )
        # E = 0 is allowed so the beta limit can be probed; negative is not.
        if not (self.youngs_modulus >= 0.0):
            raise InvalidGeometryError("youngs_modulus must be non-negative")
        if self.effective_length > self.length:
            raise InvalidGeometryError("effective_length cannot exceed length")

    @property
    def physical_mass(self) -> float:
        return self.density * self.length * self.width * self.thickness

    @property
    def modal_mass(self) -> float:
        """Effective mass of the fundamental mode (kg)."""
        return CLAMPED_CLAMPED_MODAL_MASS_FACTOR * self.physical_mass


@dataclass(frozen=True)
class SensorBudget:
    static_sensitivity: float  # m per m/s^2
    max_force: float  # N
    max_acceleration: float  # m/s^2
    natural_frequency: float  # Hz

    @property
    def max_acceleration_g(self) -> float:
        return self.max_acceleration / G

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_acceleration_g"] = self.max_acceleration_g
        return d


def accordion_spring_constant(g: SpringGeometry) -> float:
    """Stiffness (N/m) of ``g.n_parallel`` accordion springs in parallel."""
    t3 = g.member_thickness**3
    k_single = 4.0 * g.youngs_modulus * g.member_width * t3 / (
        g.long_member_length**3 + g.short_member_length**3
    )
    return g.n_parallel * k_single


def duffing_beta(g: BeamGeometry) -> float:
    """Cubic stiffness per unit mass, 1/(m^2 s^2), from the effective length."""
    return g.youngs_modulus / (18.0 * g.density) * (TWO_PI / g.effective_length) ** 4


def squeeze_film_q(g: BeamGeometry, omega0: float) -> float:
    """Squeeze-film limited quality factor of the beam.

    Args:
        g: beam geometry; uses density, thickness, gap, width and air viscosity.
        omega0: angular natural frequency (rad/s).
    """
    _require_positive(omega0=omega0)
    return g.density * g.thickness * g.gap**3 * omega0 / (g.air_viscosity * g.width**2)


def sensor_budget(mass: float, k: float, travel: float) -> SensorBudget:
    """Static sensitivity, force/acceleration limits and resonance of the proof mass."""
    _require_positive(mass=mass, k=k, travel=travel)
    max_force = k * travel
    return SensorBudget(
        static_sensitivity=mass / k,
        max_force=max_force,
        max_acceleration=max_force / mass,
        natural_frequency=math.sqrt(k / mass) / TWO_PI,
    )


def ring_down_time(q: float, omega0: float) -> float:
    """Amplitude 1/e decay time 2Q/omega0 (s)."""
    _require_positive(q=q, omega0=omega0)
    return 2.0 * q / omega0


def design_report() -> dict:
    """Evaluate every calculator at the nominal device geometry."""
    spring = SpringGeometry()
    beam = BeamGeometry()
    k_acc = accordion_spring_constant(spring)
    k_susp = accordion_spring_constant(SpringGeometry(n_parallel=2))
    travel = 5e-6
    # proof mass inferred from the 17 uN / 60 g budget
    mass = k_susp * travel / (60.0 * G)
    omega_design = TWO_PI * 484e3
    omega_measured = TWO_PI * 482.2e3
    return {
        "accordion_spring_constant_N_per_m": k_acc,
        "suspension_stiffness_N_per_m": k_susp,
        "proof_mass_kg": mass,
        "sensor_budget": sensor_budget(mass, k_susp, travel).to_dict(),
        "duffing_beta_per_m2_s2": duffing_beta(beam),
        "beam_modal_mass_kg": beam.modal_mass,
        "squeeze_film_q": squeeze_film_q(beam, omega_design),
        "ring_down_time_design_s": ring_down_time(squeeze_film_q(beam, omega_design), omega_design),
        "ring_down_time_measured_s": ring_down_time(145.0, omega_measured),
    }
