"""Spectral experiments on weighted graphs and their voltage coverings."""
from .errors import ConfigError, ConvergenceError, CoverError, DomainError, GraphError
from .graph import (SchrodingerOp, VertexFunction, WeightedGraph, apply, ball, build_graph, cycle,
                    edge_energy, from_edges, grid, induced_dirichlet, parse_graph, path,
                    quadratic_form, read_graph, regular_tree, write_graph)
from .covering import (CoveringGraph, FiberAction, cardinality_estimate, fiber_ball_multiplicity,
                       fundamental_domains, lift_cover, lift_function, lift_operator,
                       read_cover_spec, standard_cover)
from .spectral import (SpectralReport, eigenvalue_count, lambda0, lambda0_ess_estimate,
                       lambda0_exhaustion, lowest_eigenpairs, rayleigh, tree_ball_lambda0)
from .amenability import (FolnerCertificate, GeneratorSet, folner_search, generator_set,
                          orbit_decomposition, schreier_graph)
from .transplant import (PartitionOfUnity, assemble_chi, build_partition, transplant,
                         transplant_rayleigh, weyl_family)
from .cheeger import (cheeger_ess, cheeger_exact, cheeger_lower_bound_check, cheeger_sweep,
                      ground_state, renormalize)
from .bundle import (GraphBundle, build_cycle_connection, connection_lambda0,
                     holonomy_gap_experiment, pullback)

__version__ = "0.1.0"
