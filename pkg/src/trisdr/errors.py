"""Exception types shared across the package."""


class TrisdrError(Exception):
    """Base class for all package errors."""


class DegenerateDepth(TrisdrError):
    """Point lies on (or numerically too close to) a camera's principal plane."""


class CoincidentCenters(TrisdrError):
    """Two views share a camera center; no fundamental matrix exists."""


class DegenerateConfiguration(TrisdrError):
    """Linear triangulation has an ambiguous null space."""


class DehomogenizationFailure(TrisdrError):
    """Homogeneous coordinate too close to zero to dehomogenize."""


class ConfigInvalid(TrisdrError):
    """Simulation or benchmark configuration violates its invariants."""


class ThresholdInvalid(TrisdrError):
    """Inlier threshold must be strictly positive."""


class DimensionMismatch(TrisdrError):
    """Multiplier or matrix dimensions disagree with the problem."""


class EigenFailure(TrisdrError):
    """Symmetric eigendecomposition did not converge."""


class NumericalBreakdown(TrisdrError):
    """Solver iterates became non-finite."""


class NotNoiseFree(TrisdrError):
    """Analytic certificate requested for a problem that is not noise-free."""


class NotComplementary(TrisdrError):
    """Stability diagnostics need a complementary primal-dual pair."""


class NormalizationFailure(TrisdrError):
    """Extracted eigenvector cannot be normalized against E."""


class AllOutliers(TrisdrError):
    """Every view was rounded to an outlier; no point can be recovered."""


class TooManyViews(TrisdrError):
    """Brute-force oracle is limited to small view counts."""


class ParseError(TrisdrError):
    """Problem or config file could not be parsed."""


class RankAmbiguityWarning(UserWarning):
    """Kronecker factorization of the extracted vector is unreliable."""
