"""Physical constants and reference values used throughout the package."""

import math

EPS0 = 8.8541878128e-12  # F/m
G = 9.8  # m/s^2, exact by convention here
TWO_PI = 2.0 * math.pi

# Silicon
SI_DENSITY = 2328.0  # kg/m^3
SI_YOUNGS_MODULUS = 125e9  # Pa
AIR_VISCOSITY = 1.8e-5  # Pa s

# Measured device values
BEAM_F0_MEASURED = 482.2e3  # Hz
BEAM_Q_MEASURED = 145.0
BEAM_BETA_FITTED = 1.0e24  # 1/(m^2 s^2)
MASS_F0_MEASURED = 1706.0  # Hz
MASS_Q_MEASURED = 19.0

# Reference values quoted for the FEA models, kept for comparison only.
FEA_STATIC_SENSITIVITY = 82e-9  # m/g
FEA_MASS_EIGENFREQUENCY = 1865.0  # Hz
FEA_BEAM_EIGENFREQUENCY = 484e3  # Hz
