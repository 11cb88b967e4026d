"""Physical constants and default drive/ion parameters.

All internal computation is SI; lengths in the geometry layer are handled in
millimeters for readability and converted at module boundaries where noted.
"""

import scipy.constants as _sc

ELEMENTARY_CHARGE = _sc.elementary_charge      # C
ATOMIC_MASS = _sc.atomic_mass                  # kg
COULOMB_CONSTANT = 1.0 / (4.0 * _sc.pi * _sc.epsilon_0)  # N m^2 / C^2
EV = _sc.electron_volt                         # J

# Ba-138 isotope (not the element-average mass)
BA138_MASS_U = 137.905247
BA138_MASS_KG = BA138_MASS_U * ATOMIC_MASS

DEFAULT_RF_AMPLITUDE_V = 270.0     # zero-to-peak
DEFAULT_RF_FREQUENCY_HZ = 23.0e6

DEFAULT_WAVELENGTH_NM = 493.0
