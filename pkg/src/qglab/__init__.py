"""qglab: metric-graph Schrodinger operators, covering-tree Green calculus
and delocalization experiments on expander lifts."""

from .config import DEFAULTS, Options
from .graphs import (CombGraph, GraphError, Lift, bst_census, build_graph,
                     complete_graph, cycle_graph, injectivity_radius, nb_paths,
                     petersen_graph, random_n_lift, read_edge_file, spectral_gap,
                     write_edge_file)
from .edges import (EdgeBasis, IntegrationError, PotentialSpec, ZERO_POTENTIAL,
                    cs_boundary, solve_basis)
from .quantum import (DataError, QGraph, dirichlet_distance, dirichlet_values,
                      lift_qgraph, qgraph)
from .spectrum import (EigenPair, SpectrumError, SpectrumSet, delta_residuals,
                       eigenfunction_eval, eigenvalues_in, finite_green,
                       normalize, secular_matrix)
from .cover import (CoverCache, CoverError, CoverGreen, current_check,
                    e1_residual, green_hypothesis_stats, im_g_on_edge,
                    omega_defects, path_green, solve_cover, xi_profiles)
from .nonback import (NbError, NbField, NbMeasure, apply_B, apply_B_star,
                      apply_R_nr, apply_iota, build_nb_field, dense_B,
                      eigen_relation_residual, kb_apply, lp_norm_nu, mu_k,
                      mu_marginal_defects, nb_inner, nb_variance, project_F,
                      recover_vertex_values, s_gamma, s_gamma_star, s_u,
                      transfer_S, z_gamma)
from .lab import (ExperimentConfig, Observable, PathKernel, VarianceReport,
                  bracket_K, bracket_discrete, bracket_f, discrete_observables,
                  matrix_element, reduction_operators, variance_experiment,
                  vertex_form)
from .verify import run_verify, verify_graphs

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
