"""Coupled superconducting-circuit spectra, ZZ shifts and fits."""
from .circuits import CircuitParams, ModeKind
from .composite import (Coupling, CouplingForm, LabeledSpectrum, Mode, SystemSpec,
                        build_hamiltonian, converge_dims, diagonalize_converged,
                        exchange_coupling, solve)
from .config import load_config
from .errors import SquidsimError
from .observables import (anharmonicity, dispersive_shift, flux_dispersion, frequency,
                          transition_table, zz_shift)

__version__ = "0.1.0"

__all__ = [
    "CircuitParams", "ModeKind", "Coupling", "CouplingForm", "LabeledSpectrum", "Mode",
    "SystemSpec", "build_hamiltonian", "converge_dims", "diagonalize_converged",
    "exchange_coupling", "solve", "load_config", "SquidsimError", "anharmonicity",
    "dispersive_shift", "flux_dispersion", "frequency", "transition_table", "zz_shift",
]
