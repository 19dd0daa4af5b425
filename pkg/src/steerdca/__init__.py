"""Steering exact penalty DCA for nonsmooth DC problems with DC constraints."""
from .atoms import Abs, Affine, ConvexExpr, Hinge, MaxAff, Quad, SqHingeSum, Zero, value_and_subgradient
from .bundle import SubsolveConfig, SubsolveResult, grid_minimize, minimize, project
from .model import DCFunction, DCProblem, FeasibleSet, dc_value, regularize_objective, validate
from .penalty import (
    PenaltyValue,
    SubgradientBundle,
    collect_bundle,
    gamma,
    gamma_oracle,
    infeasibility,
    majorant,
    majorant_oracle,
    penalty_value,
)
from .steering import (
    IterationRecord,
    SolveReport,
    SteeringConfig,
    check_generalized_critical,
    check_linearized_slater,
    check_penalty_term_critical,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "Abs", "Affine", "ConvexExpr", "Hinge", "MaxAff", "Quad", "SqHingeSum", "Zero",
    "value_and_subgradient", "SubsolveConfig", "SubsolveResult", "grid_minimize", "minimize",
    "project", "DCFunction", "DCProblem", "FeasibleSet", "dc_value", "regularize_objective",
    "validate", "PenaltyValue", "SubgradientBundle", "collect_bundle", "gamma", "gamma_oracle",
    "infeasibility", "majorant", "majorant_oracle", "penalty_value", "IterationRecord",
    "SolveReport", "SteeringConfig", "check_generalized_critical", "check_linearized_slater",
    "check_penalty_term_critical", "run",
]
