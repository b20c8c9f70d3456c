"""Mean curvature flow of submanifolds in arbitrary codimension.

Numerical integrator for parametric immersions and graphs, with verification
monitors for the evolution identities of the projection Jacobian, localized
curvature scaling, tubular containment, and the averaged-form barrier
construction for Lipschitz initial data.
"""

__version__ = "0.1.0"

from .errors import (CoverageFailure, EmptyCloud, EmptyCover,
                     FrameDegeneracy, InfeasibleConstants,
                     InsufficientSnapshots, NonFinite, NonOrthonormalFrame,
                     NumericalHalt, PreconditionLost, SingularMetric,
                     UsageError, WindowClosed)

__all__ = [
    "__version__",
    "CoverageFailure", "EmptyCloud", "EmptyCover", "FrameDegeneracy",
    "InfeasibleConstants", "InsufficientSnapshots", "NonFinite",
    "NonOrthonormalFrame", "NumericalHalt", "PreconditionLost",
    "SingularMetric", "UsageError", "WindowClosed",
]
