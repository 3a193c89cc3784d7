"""Exception and warning types shared across the package.

All custom errors derive from :class:`QnmError` so callers can trap the
package's failures with a single except clause while still telling model
validation problems (``ModelError``, also a ``ValueError``) apart from
numerical failures.
"""


class QnmError(Exception):
    """Base class for every error raised by this package."""


class ModelError(QnmError, ValueError):
    """Base class for model validation failures."""


class GapOrOverlapError(ModelError):
    """Segments leave a gap or overlap instead of tiling [0, a]."""


class NonPositiveDensityError(ModelError):
    """A wave-family segment has a density that is not strictly positive."""


class BadPointMassError(ModelError):
    """A point mass is negative, outside (0, a], or not representable."""


class OmegaZeroError(QnmError):
    """omega = 0 requested where the static solution is excluded by policy."""


class ContourThroughZeroError(QnmError):
    """A counting contour could not be nudged off a zero of W."""


class NonIntegerWindingNumberError(QnmError):
    """The contour integral did not stabilize near an integer."""


class DegenerateRootError(QnmError):
    """Two or more zeros persist below the minimum isolation size."""


class NewtonDivergedError(QnmError):
    """Newton refinement failed to converge inside its isolating box."""


class NotAnEigenfrequencyError(QnmError):
    """Eigenfunction assembly requested at a point where W is not small."""


class GridMismatchError(QnmError, ValueError):
    """Sampled states do not share a usable quadrature grid."""


class ZeroNormError(QnmError):
    """(F, F) vanished; the mode sits at an exceptional point."""


class UnnormalizedModeError(QnmError):
    """An operation requiring (F, F) = 2*omega got an unnormalized mode."""


class TestFunctionLeaksOutsideIntervalError(QnmError):
    """The smearing test function has non-negligible mass outside [0, a]."""


class UnstableParametersError(QnmError):
    """Time-domain solver parameters are invalid or the run blew up."""


class MassOffGridError(QnmError):
    """A point mass does not coincide with a time-domain grid node."""


class DegeneratePairError(QnmError):
    """Second-order sums hit a (near-)degenerate eigenvalue pair."""


class RootLeftRectangleError(QnmError):
    """The perturbed root escaped its isolating neighbourhood."""


class NotCompletenessEligibleWarning(UserWarning):
    """Model lacks the demarcation needed for a complete mode basis."""


class ModeSetNotConjugateClosedWarning(UserWarning):
    """Mode set is not closed under omega -> -conj(omega)."""
