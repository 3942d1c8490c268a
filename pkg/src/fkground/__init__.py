"""Foliations of equilibria and ground-state certification for generalized
Frenkel-Kontorova lattice models."""

from .builtins import (DEMO_ALPHA, GOLDEN_OMEGA, antiferromagnetic_demo, cosine_potential,
                       decoupled_demo, demo_potential, fk_periodic, fk_quasiperiodic,
                       long_range_pair, three_body_demo, two_block_demo)
from .comparison import (ContactScenario, contact_check, contact_propagation,
                         hilbert_identity_check, synthetic_scenario)
from .errors import (ContactError, ContractError, ConvergenceError, EvaluationError,
                     FKGroundError, FoliationError, GraphError, HypothesisError,
                     ModelFileError, PreconditionError, ResonanceError, SearchError)
from .foliation import (ClosedFormFamily, FoliationFamily, HullFamily, build_foliation,
                        check_axioms, restrict)
from .graph import (InteractionGraph, build_graph, connected_hull, distance, distance_to_set,
                    frontier, is_transitive)
from .groundstate import (GroundStateReport, brute_force_oracle, minimize_window,
                          verify_theorem)
from .hull import (HullFunction, hull_residual, monotonicity_margin, sample_config,
                   solve_hull, translate)
from .model import (InteractionSpec, InteractionTerm, LatticeConfiguration, TorusPotential,
                    coercivity_probe, ferromagnetic_check, hessian_entry, linear_background,
                    relative_energy, residual, summability_probe, window_energy)

__version__ = "0.1.0"
