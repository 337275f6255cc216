"""Exception types shared across the package."""


class EbarxError(Exception):
    """Base class for all errors raised by ebarx."""


class NotPositiveDefinite(EbarxError, ValueError):
    """Cholesky factorization hit a pivot below the threshold.

    ``index`` is the 0-based leading minor at which the factorization failed.
    """

    def __init__(self, index, pivot=None):
        self.index = index
        self.pivot = pivot
        msg = f"matrix is not positive definite (leading minor {index + 1}"
        if pivot is not None:
            msg += f", pivot {pivot:.3g}"
        super().__init__(msg + ")")


class RankDeficient(EbarxError, ValueError):
    """Regressor Gram matrix is numerically singular."""


class InsufficientData(EbarxError, ValueError):
    """Not enough samples to fill a requested regressor row."""


class UnstableModel(EbarxError, ValueError):
    """AR polynomial has a root on or outside the unit circle."""
