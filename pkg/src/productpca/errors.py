"""Exception types shared across the package."""


class ProductPcaError(Exception):
    """Base class for every error this library raises on purpose."""


class InvalidInput(ProductPcaError, ValueError):
    """An argument violates a documented precondition."""


class NotPositiveSemidefinite(ProductPcaError, ValueError):
    """A matrix that must be PSD has an eigenvalue below tolerance."""


class RankDeficient(ProductPcaError, ValueError):
    """A matrix lacks the (column) rank the operation requires."""


class DegenerateIntegration(ProductPcaError, ArithmeticError):
    """A left/right singular-vector pair is too close to orthogonal to merge."""


class IndexMatchFailure(ProductPcaError, RuntimeError):
    """A perturbed spectrum could not be matched back to reference indices."""


class TieError(ProductPcaError, ValueError):
    """Tied eigenvalues make the requested quantity ill-defined."""


class StudyIncomplete(ProductPcaError, RuntimeError):
    """Too many replicates failed for aggregate study output to be reported."""


class FormatError(ProductPcaError, ValueError):
    """An on-disk artifact does not match its documented format."""
