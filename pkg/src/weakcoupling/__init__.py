"""Completely positive Markovian generators for projected quantum dynamics."""

__version__ = "0.1.0"

from .opcore import (BohrDecomposition, bohr_decompose, commutator_superop, superop_exp,
                     superop_norm, unitary_propagator, unvec, vec)
from .projections import (EntanglingFamily, KrausProjection, ProjectionKind,
                          apply_projection, block_diagonal_projection, diagonal_projection,
                          entangling_projection, partial_trace_projection, projection_audit)
from .generators import (GeneratorBundle, build_generator, damped_davies, gaussian_time_average,
                         k_R_smoothed, k_T, ktilde_T, second_order_hamiltonian,
                         smoothed_interaction, spectral_average)
from .positivity import choi, cp_semigroup_audit, gks_canonical, is_cp, is_trace_preserving
from .dynamics import convergence_sweep, exact_projected, markov_propagator, nz_residual, sup_error
from .qfgr import evolve_qfgr, qfgr_rhs, scattering_operators, steady_state_scan
