import numpy as np

from scipy.optimize import minimize
from scipy.stats import norm, qmc

from xferbo.data.utils import bounds_array, to_unit, from_unit
from xferbo.utils import XferBOConfigException


class AcquisitionConfig(object):
    """
    Parameters
    ----------
    candidate_count : int
                      Latin hypercube candidates scored per acquisition.
    refine_steps : int
                   Evaluation budget of the simplex polish of the best candidate, 0 disables it.
    sd_floor : float
               Below this predictive standard deviation the improvement is treated as deterministic.
    """
    def __init__(self, candidate_count=1000, refine_steps=50, sd_floor=1e-12):
        if int(candidate_count) < 1:
            raise XferBOConfigException("candidate_count must be at least 1, got {}".format(candidate_count))
        if int(refine_steps) < 0:
            raise XferBOConfigException("refine_steps must be non-negative, got {}".format(refine_steps))
        if not float(sd_floor) > 0:
            raise XferBOConfigException("sd_floor must be positive, got {}".format(sd_floor))
        self.candidate_count = int(candidate_count)
        self.refine_steps = int(refine_steps)
        self.sd_floor = float(sd_floor)

    def as_dict(self):
        return dict(candidate_count=self.candidate_count, refine_steps=self.refine_steps, sd_floor=self.sd_floor)


def expected_improvement(mean, sd, y_min, sd_floor=1e-12):
    """
    Expected improvement below `y_min` of a normal prediction,

        EI = (y_min - mean) Phi(z) + sd phi(z),  z = (y_min - mean) / sd

    When `sd` is under `sd_floor` the prediction is taken as exact and the improvement is max(y_min - mean, 0).

    Parameters
    ----------
    mean : float, array_like
    sd : float, array_like
         Non-negative.
    y_min : float
    sd_floor : float

    Returns
    -------
    ei : float, ndarray
         Same shape as `mean`, never negative.
    """
    scalar = np.ndim(mean) == 0 and np.ndim(sd) == 0
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(sd < 0):
        raise ValueError("Standard deviations must be non-negative.")
    improvement = y_min - mean
    deterministic = sd < sd_floor
    safe_sd = np.where(deterministic, 1.0, sd)
    z = improvement / safe_sd
    ei = np.where(deterministic, np.maximum(improvement, 0.0), improvement * norm.cdf(z) + safe_sd * norm.pdf(z))
    ei = np.maximum(ei, 0.0)
    return float(ei) if scalar else ei


def _bounds(bounds):
    if len(bounds) > 0 and hasattr(bounds[0], 'lower'):
        return bounds_array(bounds)
    return np.asarray(bounds, dtype=float).reshape(-1, 2)


def _constraint_means(constraint_surrogates, x):
    if len(constraint_surrogates) == 0:
        return np.zeros((len(x), 0))
    return np.column_stack([c.predict_many(x)[0] for c in constraint_surrogates])


def maximize_constrained(objective_surrogate, constraint_surrogates, bounds, y_min, config=None, seed=0):
    """
    Maximize the expected improvement of the objective surrogate subject to every constraint surrogate mean being
    non-positive. Candidates come from a Latin hypercube; the best feasible one is optionally polished by a bounded
    Nelder-Mead search that rejects infeasible points. Without any feasible candidate, the candidate with the least
    total predicted violation is returned.

    Parameters
    ----------
    objective_surrogate :
                          Anything with `predict_many(x) -> (mean, sd)`.
    constraint_surrogates : list
                            Surrogates of the constraints, only their means are used.
    bounds : list, array_like
             `VariableMeta` list or D x 2 bounds.
    y_min : float
            Best feasible objective observed. When not finite, the largest candidate mean is used.
    config : AcquisitionConfig, None
    seed : int

    Returns
    -------
    x : ndarray
        The selected point, within bounds.
    """
    config = AcquisitionConfig() if config is None else config
    bounds = _bounds(bounds)
    lower, upper = bounds[:, 0], bounds[:, 1]
    sampler = qmc.LatinHypercube(d=len(bounds), seed=np.random.default_rng(seed))
    candidates = qmc.scale(sampler.random(config.candidate_count), lower, upper)

    mean, sd = objective_surrogate.predict_many(candidates)
    if not np.isfinite(y_min):
        y_min = float(np.max(mean))
    ei = expected_improvement(mean, sd, y_min, config.sd_floor)
    c_means = _constraint_means(constraint_surrogates, candidates)
    feasible = np.all(c_means <= 0, axis=1)

    if not np.any(feasible):
        violation = np.sum(np.maximum(c_means, 0.0), axis=1)
        return candidates[int(np.argmin(violation))]

    feasible_idx = np.nonzero(feasible)[0]
    best = feasible_idx[int(np.argmax(ei[feasible_idx]))]
    x = candidates[best]
    if config.refine_steps == 0:
        return x

    def negative_ei(u):
        point = from_unit(np.clip(u, 0, 1), lower, upper).reshape(1, -1)
        if np.any(_constraint_means(constraint_surrogates, point) > 0):
            return np.inf
        m, s = objective_surrogate.predict_many(point)
        return -float(expected_improvement(m, s, y_min, config.sd_floor)[0])

    result = minimize(negative_ei, to_unit(x, lower, upper), method='Nelder-Mead', bounds=[(0, 1)] * len(bounds),
                      options=dict(maxfev=config.refine_steps))
    if np.isfinite(result.fun) and -result.fun > ei[best]:
        return np.clip(from_unit(np.clip(result.x, 0, 1), lower, upper), lower, upper)
    return x
