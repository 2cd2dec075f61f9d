"""Quantum-trajectory study of two-photon interference in coupled atom-cavity systems.

Two mirror-symmetric atom-cavity systems exchange photons through a fiber
in both directions; two detectors watch the two output fields.  This
package propagates the two-excitation no-jump state, samples
photodetection records, and checks the same/different-detector statistics
against a deterministic oracle.
"""

__version__ = "0.1.0"

from ._kernels import available_backends, default_backend
from .dynamics import (DensityTrace, PropagatorConfig, decay_horizon,
                       density_scan, detection_rates, equal_time_densities,
                       equal_time_densities_from_amplitudes, propagate)
from .errors import (DegenerateSummaryError, EmptySectorError, HomsimError,
                     ImpossibleJumpError, IntegratorError, InvalidSectorError,
                     InvalidStateError, SectorMismatchError)
from .hilbert import (BasisState, SectorBasis, StateVector, basis_table_csv,
                      basis_vector, enumerate_sector, index_of, initial_state,
                      mirror_permutation, mirror_state, norm_squared)
from .operators import (OperatorSet, SectorOperator, SystemParams,
                        annihilation, build_operator_set, cascade_hamiltonian,
                        full_hamiltonian, full_jump, jump_operator,
                        non_hermitian_hamiltonian, sigma_minus,
                        system_hamiltonian)
from .oracle import (JointDensityGrid, LindbladDiagnostics, PairProbabilities,
                     first_click_density, joint_click_density,
                     joint_density_grid, lindblad_check, pair_probabilities)
from .stats import (EnsembleSummary, Histogram, HistogramSpec, histograms_csv,
                    summarize, summary_dict, waiting_time_split)
from .trajectory import (ClickEvent, EnsembleConfig, TrajectoryResult,
                         clicks_csv, collapse, default_t_max, run_ensemble,
                         run_trajectory)
