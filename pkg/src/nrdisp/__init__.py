"""Non-reciprocal qubit-cavity dispersive dynamics."""

from .core import (EffectiveParams, QubitSector, coherence_coefficient, conditional_energy,
                   decay_constant, mhz, params_from_energies, to_mhz)
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
