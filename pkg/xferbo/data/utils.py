import numpy as np


def bounds_array(variables):
    """(D, 2) array of lower/upper bounds for a list of variables."""
    return np.array([[v.lower, v.upper] for v in variables], dtype=float).reshape(-1, 2)


def to_unit(x, lower, upper):
    return (np.asarray(x, dtype=float) - lower) / (upper - lower)


def from_unit(u, lower, upper):
    return lower + np.asarray(u, dtype=float) * (upper - lower)


def within_bounds(x, variables, tol=1e-12):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    b = bounds_array(variables)
    span = b[:, 1] - b[:, 0]
    return np.all((x >= b[:, 0] - tol * span) & (x <= b[:, 1] + tol * span), axis=1)


def standardize(y):
    """
    Returns the standardized vector along with its mean and standard deviation. A constant vector keeps a unit
    standard deviation so it is left at zero after centering.
    """
    y = np.asarray(y, dtype=float)
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not np.isfinite(std) or std <= 1e-14 * max(1.0, abs(mean)):
        std = 1.0
    return (y - mean) / std, mean, std
