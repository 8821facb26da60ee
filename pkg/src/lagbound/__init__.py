"""Decomposition dual bounds for constrained optimization problems.

The package splits a constrained maximization problem into one sub-problem
per constraint, prices the duplicated variables with multipliers, and uses
the summed sub-optima as a provable upper bound inside branch-and-bound.
Multipliers come either from sub-gradient optimization or from a graph
network trained, self-supervised, to minimize the bound directly.
"""

from .encoding import FeatureGraph, dump_graph_json, encode_instance, encode_mkp, encode_ssp
from .errors import (
    FamilyMismatchError,
    GenerationError,
    Infeasible,
    InstanceFormatError,
    LagboundError,
    ModelFormatError,
)
from .instances import (
    Automaton,
    MkpInstance,
    PartialAssignment,
    SspInstance,
    generate_mkp,
    generate_ssp,
    read_instance,
    write_instance,
)
from .lagrangian import (
    BoundResult,
    Multipliers,
    SubgradientConfig,
    default_sg_config,
    evaluate_bound,
    optimize_multipliers,
    subgradient_step,
)
from .neural import (
    AdamState,
    GnnParams,
    adam_state_for,
    adam_step,
    gnn_backward,
    gnn_forward,
    init_params,
    load_model,
    save_model,
)
from .solver import (
    BoundingMode,
    SolveResult,
    SolveStatus,
    propagate_knapsack,
    propagate_regular,
    prune_test,
    solve,
)
from .subsolvers import KnapsackSubproblem, RegularSubproblem, solve_knapsack, solve_regular
from .training import Dataset, TrainConfig, augment, evaluate, train

__version__ = "0.1.0"
