import numpy as np


class XferBOConfigException(Exception):
    """
    Exception to be triggered when xferbo configuration parsing or validation fails.
    """
    pass


class XferBOTrainingException(Exception):
    """
    Exception to be triggered when a Gaussian process cannot be trained, e.g. the covariance matrix stays
    indefinite after the largest nugget, or every multi-start of the hyperparameter search failed.
    """
    pass


class XferBOAlignmentException(Exception):
    """
    Exception to be triggered when a source design space cannot be aligned to the target design space.
    """
    pass


class XferBOBlackboxException(Exception):
    """
    Exception to be triggered when a blackbox evaluation fails. `row` is the DOE row being evaluated (if known) and
    `cause` a short reason such as "timeout".
    """
    def __init__(self, message, row=None, cause=None):
        super().__init__(message)
        self.row = row
        self.cause = cause


class XferBOWarning(UserWarning):
    pass


class NoInformativeSourceWarning(XferBOWarning):
    """All source models scored zero, probabilities fell back to uniform."""
    pass


class BroadConstraintMatchWarning(XferBOWarning):
    pass


class DroppedSourceWarning(XferBOWarning):
    pass


class DegenerateDataWarning(XferBOWarning):
    pass


class TruncatedSummaryWarning(XferBOWarning):
    pass


def derive_seed(seed, *keys):
    """
    Derive a child seed from a base seed and any number of integer keys (run index, iteration, purpose...). The
    mapping is stable across platforms and python sessions.

    Parameters
    ----------
    seed : int
    keys : int

    Returns
    -------
    child : int
            A 32-bit seed.
    """
    entropy = [int(seed) % (2 ** 63)] + [int(k) % (2 ** 63) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def as_matrix(x, dims=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if dims is not None and x.shape[-1] != dims:
        raise ValueError("Expected points with {} coordinates, got {}.".format(dims, x.shape[-1]))
    return x


def inclusive_quartiles(values):
    """
    Tukey hinges: quartiles as medians of the lower and upper halves, the median included in both halves when the
    number of values is odd.
    """
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    if n == 0:
        return np.nan, np.nan, np.nan
    half = (n + 1) // 2
    return float(np.median(values[:half])), float(np.median(values)), float(np.median(values[n - half:]))
