"""Refit Bayesian-network probability tables to marginal constraints.

The solvers keep the network structure fixed and move its joint
distribution as little as possible, in the I-divergence sense, while
meeting target marginals over arbitrary variable subsets.
"""

from .core import (
    TAU_NORM,
    BnError,
    Constraint,
    Cpt,
    CycleError,
    DominanceError,
    JointTable,
    Local,
    LocalityClass,
    NetworkSpec,
    NonLocal,
    NormalizationError,
    ScopeError,
    ValidationError,
    VariableDecl,
    classify_constraint,
    classify_scope,
    constraint_residual,
    extract_cpt,
    i_divergence,
    is_structurally_consistent,
    joint_from_network,
    marginalize,
    validate_constraint,
)
from .dense import (
    RunReport,
    Schedule,
    StopPolicy,
    Termination,
    ipfp_step,
    run_e_ipfp,
    run_ipfp,
    structural_projection,
)
from .decomposed import (
    SUBNET_BUDGET,
    LocalSubnet,
    SubnetSizeError,
    build_local_subnet,
    extract_subnet_cpts,
    local_update,
    nonlocal_update,
    run_d_ipfp,
)
from .fileio import (
    FORMAT_VERSION,
    FormatError,
    parse_constraints,
    parse_network,
    report_to_bytes,
    serialize_constraints,
    serialize_network,
)
from .generate import generate_instance, perturb_network, random_constraints, random_network

__version__ = "0.1.0"

__all__ = [
    "TAU_NORM",
    "BnError",
    "Constraint",
    "Cpt",
    "CycleError",
    "DominanceError",
    "JointTable",
    "Local",
    "LocalityClass",
    "NetworkSpec",
    "NonLocal",
    "NormalizationError",
    "ScopeError",
    "ValidationError",
    "VariableDecl",
    "classify_constraint",
    "classify_scope",
    "constraint_residual",
    "extract_cpt",
    "i_divergence",
    "is_structurally_consistent",
    "joint_from_network",
    "marginalize",
    "validate_constraint",
    "RunReport",
    "Schedule",
    "StopPolicy",
    "Termination",
    "ipfp_step",
    "run_e_ipfp",
    "run_ipfp",
    "structural_projection",
    "SUBNET_BUDGET",
    "LocalSubnet",
    "SubnetSizeError",
    "build_local_subnet",
    "extract_subnet_cpts",
    "local_update",
    "nonlocal_update",
    "run_d_ipfp",
    "FORMAT_VERSION",
    "FormatError",
    "parse_constraints",
    "parse_network",
    "report_to_bytes",
    "serialize_constraints",
    "serialize_network",
    "generate_instance",
    "perturb_network",
    "random_constraints",
    "random_network",
    "__version__",
]
