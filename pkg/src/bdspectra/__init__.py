"""Spectra of scaled birth-and-death generators.

Builds the symmetrised killed generator as a tridiagonal matrix, computes the
bottom of its spectrum, and compares it with the merged limit sequence, the
quasi-stationary distribution and exact stochastic simulation.
"""

from .model import (AssumptionReport, ModelConstants, ModelError, RateModel, check_assumptions,
                    model_constants, rates, rates_at)
from .operator import (TridiagonalOperator, TruncationSpec, build_operator, choose_truncation,
                       dirichlet_form, potential_profile)
from .eigensolve import SolverError, SpectralResult, dense_oracle, sturm_count, top_eigenpairs
from .limit_spectra import (LimitSpectrum, MergedSequence, apply_Hstar, apply_M0,
                            branching_eigenvector, hermite_eigenfunction, merge_eta)
from .qsd import (PiWeights, QsdResult, mean_extinction_asymptotic, pi_weights,
                  qsd_from_ground_state)
from .simulate import (ExtinctionStats, Fixed, FromQsd, SimulationConfig, extinction_study,
                       gillespie_trajectory, sample_initial_from_qsd)
from .analysis import (ConvergenceReport, EmbeddingGrid, LocalizationReport, certify,
                       compare_boundary_to_branching, compare_bulk_to_hermite,
                       localization_report, quasi_eigenvector_boundary, quasi_eigenvector_bulk,
                       spectrum_convergence)

__version__ = "0.1.0"
