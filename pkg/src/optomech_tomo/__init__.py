"""Reconstruct mechanical states of an optomechanical cavity from single-photon spectra."""

__version__ = "0.1.0"

from .core import (fidelity_density, fidelity_distribution, fock_density, franck_condon,
                   franck_condon_matrix, laguerre, maximally_mixed, superposed_fock_density,
                   thermal_distribution)
from .errors import (ConsistencyError, IllPosedError, IntegratorError, InvalidInputError,
                     OptomechError, ResourceError)
from .oracle import ContinuumDiscretization, OracleEngine, oracle_spectrum
from .reconstruct import (SamplePlan, build_diagonal_problem, build_general_problem,
                          convergence_scan, explicit_plan, general_sideband_plan, random_plan,
                          sideband_plan, solve_diagonal, solve_general)
from .spectra import (LorentzianPacket, Spectrum, SystemParams, emission_amplitude,
                      emission_amplitudes, lambda_element, lambda_matrix, spectrum_emission,
                      spectrum_fock)
