"""Exception and warning types shared across the toolkit."""


class AmbientModesError(Exception):
    """Base class for all toolkit errors."""


class KronReductionError(AmbientModesError):
    """Eliminated sub-block is singular; carries the offending pivot index."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"singular pivot at eliminated bus index {pivot}")


class NetworkSolveError(AmbientModesError):
    """Newton solve of the algebraic network equations failed to converge."""

    def __init__(self, mismatch, iterations, message=None):
        self.mismatch = mismatch
        self.iterations = iterations
        super().__init__(
            message
            or f"no convergence after {iterations} iterations (mismatch {mismatch:.3e})"
        )


class SingularNetworkJacobian(AmbientModesError):
    """Jacobian of the algebraic network equations is singular."""


class EquilibriumError(AmbientModesError):
    """No equilibrium found for the given dispatch (infeasible model)."""


class AlgebraicEliminationError(AmbientModesError):
    """Stacked converter-bus block is singular; bus voltages not locally determined."""


class SimulationError(AmbientModesError):
    """Integration aborted; carries the failing step index."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"simulation aborted at step {step}")


class StabilityError(AmbientModesError):
    """State matrix is not Hurwitz where stability is required."""


class ConditioningError(AmbientModesError):
    """Sample covariance is singular or too ill-conditioned to invert."""


class BranchCutError(AmbientModesError):
    """Eigenvalue of R(tau) C^-1 sits on or near the negative real axis, so the
    principal matrix logarithm is undefined or unreliable."""


class DegenerateModesError(AmbientModesError):
    """State matrix is defective (repeated eigenvalue without full eigenbasis)."""


class NonstationaryWarning(UserWarning):
    """Spectral radius of R(tau) C^-1 is >= 1: data looks nonstationary."""


class NearDegenerateWarning(UserWarning):
    """Eigenvalues nearly repeated; participation factors may be inaccurate."""
