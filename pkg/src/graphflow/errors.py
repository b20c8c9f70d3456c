"""Exception types shared across the package."""


class GraphflowError(Exception):
    """Base class for all package-specific errors."""


class SingularMetric(GraphflowError):
    """det(g) fell below the degeneracy threshold; the immersion broke down."""


class NonFinite(GraphflowError):
    """A NaN or Inf appeared in the state; the run must halt."""


class FrameDegeneracy(GraphflowError):
    """Fewer than m independent normal candidates were found."""


class NonOrthonormalFrame(GraphflowError):
    """A frame that was required to be orthonormal is not."""


class CoverageFailure(GraphflowError):
    """Greedy center selection left some sample uncovered."""


class EmptyCover(GraphflowError):
    """Point lies outside the support of every cutoff."""


class InfeasibleConstants(GraphflowError):
    """No admissible (K0, K) pair found in the scan."""


class InsufficientSnapshots(GraphflowError):
    """Residual monitors need at least three recorded snapshots."""


class PreconditionLost(GraphflowError):
    """A monitor's standing hypothesis failed mid-run (e.g. min Jacobian <= 1/sqrt(2))."""


class WindowClosed(GraphflowError):
    """The shrinking localization ball became empty before any time was monitored."""


class EmptyCloud(GraphflowError):
    """Hausdorff distance of an empty point cloud is undefined."""


class UsageError(GraphflowError):
    """Bad configuration or command-line input (CLI exit code 64)."""


class NumericalHalt(GraphflowError):
    """Flow halted on SingularMetric/NonFinite; carries the partial trajectory."""

    def __init__(self, reason: str, time: float, trajectory=None):
        super().__init__(f"flow halted at t={time:.6g}: {reason}")
        self.reason = reason
        self.time = time
        self.trajectory = trajectory
