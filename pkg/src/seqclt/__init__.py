"""Sequential central limit theorem diagnostics for expanding circle maps."""

__version__ = "0.1.0"

from .maps import (CircleMap, Observable, SequenceSpec, IndexSequence, explicit, periodic,
                   iid, eval_branches, expansion_constants, distortion_constant,
                   specification_gap)
from .spectral import (GridFunction, Phase, OperatorChain, OperatorChainSpec, calculus,
                       apply_transfer, push_sequence, transfer_matrix)

from .cones import (ConeContext, ConeDomainError, membership_margin, cone_norm,
                    hilbert_distance, complex_membership, complex_gauge, contraction_report)
from .clt import (CenteredSequence, center_sequence, variance, sigma_n, char_fn,
                  berry_esseen, monte_carlo, condition_diagnostics)
from .growth import (truncated_centers, growth_criterion, martingale_decomposition,
                     coboundary_solve, random_dichotomy)

__all__ = [
    "CircleMap", "Observable", "SequenceSpec", "IndexSequence", "explicit", "periodic", "iid",
    "eval_branches", "expansion_constants", "distortion_constant", "specification_gap",
    "GridFunction", "Phase", "OperatorChain", "OperatorChainSpec", "calculus",
    "apply_transfer", "push_sequence", "transfer_matrix",
    "ConeContext", "ConeDomainError", "membership_margin", "cone_norm", "hilbert_distance",
    "complex_membership", "complex_gauge", "contraction_report",
    "CenteredSequence", "center_sequence", "variance", "sigma_n", "char_fn", "berry_esseen",
    "monte_carlo", "condition_diagnostics",
    "truncated_centers", "growth_criterion", "martingale_decomposition", "coboundary_solve",
    "random_dichotomy",
]
