"""Exception types shared across the toolkit."""


class GadkitError(Exception):
    """Base class for all toolkit errors."""


class UnsupportedOperationError(GadkitError):
    """Requested operation is not available for this model (e.g. a transposed
    Jacobian action on a large model that ships no analytic adjoint)."""


class NumericalBlowupError(GadkitError):
    """Integration produced non-finite values."""


class DegenerateProjectorError(GadkitError):
    """The oblique projector 1 - 2 v w^T / <w, v> lost its footing: <w, v> ~ 0."""


class NotAFixedPointError(GadkitError):
    """A fixed-point-only operation was called at a point with a large residual."""


class SingularJacobianError(GadkitError):
    """Newton refinement hit a (numerically) singular Jacobian."""


class ConvergenceError(GadkitError):
    """An iteration that must converge (e.g. Newton refinement) did not."""


class SpectrumHypothesisError(GadkitError):
    """The Jacobian spectrum violates the distinct-real-eigenvalue hypothesis
    required by the extended-system stability analysis."""


class ConfigError(GadkitError):
    """Bad run configuration (unknown key, unparsable value, missing key)."""
