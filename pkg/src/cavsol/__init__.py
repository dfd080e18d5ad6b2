"""Mean-field simulation of cavity-mediated momentum-state solitons.

Natural units hbar = M = k = 1 throughout; see :mod:`cavsol.core`.
"""

from cavsol.core import (E_R, TAU, UNITS, LockedRegimeWarning, MomentumEnsemble,
                         SimulationParams, build_ensemble, chi_opt)
from cavsol.kernels import BACKEND, NumericalAbort

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "E_R",
    "LockedRegimeWarning",
    "MomentumEnsemble",
    "NumericalAbort",
    "SimulationParams",
    "TAU",
    "UNITS",
    "build_ensemble",
    "chi_opt",
]
