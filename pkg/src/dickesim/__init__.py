"""Simulator and analysis toolkit for shared-sideband Dicke-state
preparation in mixed-species ion chains: chain normal modes, exact
red-sideband pulse dynamics, fidelity-versus-mass-ratio scans, and the
photon-count maximum-likelihood readout pipeline."""

__version__ = "0.1.0"

from .chain import (ChainConfig, ChainFile, ChainTemplate,
                    EquilibriumSolution, LambDickeWarning, ModeSet,
                    coupling_strengths, length_scale, load_chain_config,
                    modes_to_csv, read_chain_file, scaled_gradient,
                    scaled_hessian, scaled_potential, solve_axial_modes,
                    solve_equilibrium)
from .detection import (CalibrationResult, CountDistribution, CountModel,
                        FitResult, ParityScanResult, ReadoutModel,
                        bright_ion_dist, calibrate, composite_dists, convolve,
                        dark_ion_dist, estimate_period, ml_fit,
                        parity_from_fit, parity_scan_analysis,
                        parity_std_from_fit, poisson_dist, synthesize_shots)
from .dicke import (QubitDensity, QubitState, coherence_two_qubit,
                    collective_rotation, dicke_fidelity, dicke_state,
                    dicke_vector, fidelity_two_qubit, parity_expectation,
                    rotated_density, rotated_parity, single_qubit_rotation,
                    w_fidelity_analytic)
from .errors import (ConvergenceError, DataError, DickesimError,
                     IdentifiabilityError, SearchError, SweepError,
                     UnstableCrystalError)
from .sideband import (JointSpace, JointState, PulseResult, SweepRow, evolve,
                       fidelity_vs_mass_ratio, first_max_fidelity,
                       first_max_from_couplings, initial_state,
                       phonon_distribution, reduce_to_qubits,
                       rsb_hamiltonian, total_excitation)

__all__ = [name for name in dir() if not name.startswith("_")]
