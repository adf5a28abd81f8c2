import warnings

import numpy as np

from collections import namedtuple

from xferbo.utils import XferBOConfigException, NoInformativeSourceWarning, DegenerateDataWarning

CRITERIA = ('shape', 'accuracy', 'variance')

ROLE_WEIGHTS = {
    'objective': dict(shape=0.5, accuracy=0.0, variance=0.5),
    'constraint': dict(shape=1 / 3, accuracy=1 / 3, variance=1 / 3),
}

CriterionScores = namedtuple('CriterionScores', ['tau_shape', 'tau_accuracy', 'tau_variance', 'c_shape',
                                                 'c_accuracy', 'c_variance', 'score'])


def discordant_tau(source_preds, target_vals):
    """
    Discordant pairs between the ranking of the source predictions and of the target values,

        tau = sum_{m=1..n} sum_{k=2..n} 1((s_m < s_k) xor (t_m < t_k)) / n

    Parameters
    ----------
    source_preds : array_like
    target_vals : array_like
                  Same length n >= 2.

    Returns
    -------
    tau : float
    """
    s = np.asarray(source_preds, dtype=float).reshape(-1)
    t = np.asarray(target_vals, dtype=float).reshape(-1)
    if len(s) != len(t):
        raise ValueError("Got {} source predictions for {} target values.".format(len(s), len(t)))
    if len(s) < 2:
        raise ValueError("Ranking needs at least 2 points, got {}".format(len(s)))
    discordant = (s[:, np.newaxis] < s[np.newaxis, 1:]) != (t[:, np.newaxis] < t[np.newaxis, 1:])
    return float(np.sum(discordant)) / len(s)


def epanechnikov(tau, rho=1.0):
    """Quadratic kernel 3/4 (1 - t^2) of t = tau / rho, zero beyond t = 1."""
    if not rho > 0:
        raise ValueError("Bandwidth must be positive, got {}".format(rho))
    t = tau / rho
    return 0.75 * (1 - t ** 2) if t <= 1 else 0.0


def accuracy_tau(source_preds, target_vals, eps_max=0.05):
    """
    Fraction of points where the relative error |s - t| / |t| exceeds `eps_max`. Where |t| < 1e-12 the absolute error
    is compared instead.
    """
    s = np.asarray(source_preds, dtype=float).reshape(-1)
    t = np.asarray(target_vals, dtype=float).reshape(-1)
    if len(s) != len(t) or len(s) == 0:
        raise ValueError("Need matching non-empty vectors, got {} and {}".format(len(s), len(t)))
    error = np.abs(s - t)
    denominator = np.abs(t)
    small = denominator < 1e-12
    relative = np.where(small, error, error / np.where(small, 1.0, denominator))
    return float(np.sum(relative > eps_max)) / len(s)


def variance_tau(source_sds, target_vals, sigma_max=0.1):
    """
    Fraction of points where the source standard deviation, relative to the largest absolute target value, exceeds
    `sigma_max`.
    """
    sds = np.asarray(source_sds, dtype=float).reshape(-1)
    t = np.asarray(target_vals, dtype=float).reshape(-1)
    if len(sds) == 0:
        raise ValueError("Need at least one point.")
    y_max = float(np.max(np.abs(t)))
    if y_max == 0:
        warnings.warn("Target values are all zero, the variance criterion has no scale and counts no violation.",
                      DegenerateDataWarning)
        return 0.0
    return float(np.sum(sds / y_max > sigma_max)) / len(sds)


class CriteriaConfig(object):
    """
    How source models are scored against the target data.

    Parameters
    ----------
    weights : dict, None
              Weight of each of 'shape', 'accuracy' and 'variance', non-negative and summing to one. Defaults to the
              preset of `role`.
    bandwidth : float
                Shared Epanechnikov bandwidth.
    bandwidths : dict, None
                 Per-criterion bandwidths, each defaulting to `bandwidth`.
    max_rel_error : float
                    Relative error beyond which a point counts against the accuracy criterion.
    max_rel_variance : float
                       Relative standard deviation beyond which a point counts against the variance criterion.
    role : str
           'objective' or 'constraint', selects the default weights.
    """
    def __init__(self, weights=None, bandwidth=1.0, bandwidths=None, max_rel_error=0.05, max_rel_variance=0.1,
                 role='objective'):
        if role not in ROLE_WEIGHTS:
            raise XferBOConfigException("Role must be one of {}, got {}".format(list(ROLE_WEIGHTS), role))
        weights = dict(ROLE_WEIGHTS[role] if weights is None else weights)
        unknown = set(weights).difference(CRITERIA)
        if unknown:
            raise XferBOConfigException("Unknown criteria {}".format(unknown))
        weights = {c: float(weights.get(c, 0.0)) for c in CRITERIA}
        if any(w < 0 for w in weights.values()) or abs(sum(weights.values()) - 1) > 1e-9:
            raise XferBOConfigException("Criteria weights must be non-negative and sum to 1, got {}".format(weights))
        if not float(bandwidth) > 0:
            raise XferBOConfigException("Bandwidth must be positive, got {}".format(bandwidth))
        bandwidths = dict() if bandwidths is None else dict(bandwidths)
        bandwidths = {c: float(bandwidths.get(c, bandwidth)) for c in CRITERIA}
        if any(not b > 0 for b in bandwidths.values()):
            raise XferBOConfigException("Bandwidths must be positive, got {}".format(bandwidths))
        if not float(max_rel_error) > 0 or not float(max_rel_variance) > 0:
            raise XferBOConfigException("max_rel_error and max_rel_variance must be positive.")
        self.role = role
        self.weights = weights
        self.bandwidth = float(bandwidth)
        self.bandwidths = bandwidths
        self.max_rel_error = float(max_rel_error)
        self.max_rel_variance = float(max_rel_variance)

    def for_role(self, role):
        """Same thresholds and bandwidths with the weight preset of `role`."""
        return CriteriaConfig(bandwidth=self.bandwidth, bandwidths=self.bandwidths, max_rel_error=self.max_rel_error,
                              max_rel_variance=self.max_rel_variance, role=role)

    @classmethod
    def from_dict(cls, d: dict, role='objective'):
        """
        Options for one role from a configuration entry. Weights may be given per role under
        `weights: {objective: {...}, constraint: {...}}`.
        """
        d = dict(d or {})
        d.pop('role', None)
        weights = d.pop('weights', None)
        if isinstance(weights, dict) and role in weights:
            weights = weights[role]
        elif isinstance(weights, dict) and set(weights).intersection(ROLE_WEIGHTS):
            weights = None
        return cls(weights=weights, role=role, **d)

    def as_dict(self):
        return dict(role=self.role, weights=dict(self.weights), bandwidth=self.bandwidth,
                    bandwidths=dict(self.bandwidths), max_rel_error=self.max_rel_error,
                    max_rel_variance=self.max_rel_variance)

    def score(self, tau_shape, tau_accuracy, tau_variance):
        c = dict(shape=epanechnikov(tau_shape, self.bandwidths['shape']),
                 accuracy=epanechnikov(tau_accuracy, self.bandwidths['accuracy']),
                 variance=epanechnikov(tau_variance, self.bandwidths['variance']))
        total = sum(self.weights[k] * c[k] for k in CRITERIA)
        return CriterionScores(tau_shape, tau_accuracy, tau_variance, c['shape'], c['accuracy'], c['variance'],
                               total)


def criteria_scores(source, target_inputs, target_values, config: CriteriaConfig):
    """
    Score one transferred source model on the target data. The shape criterion ranks the raw source predictions, the
    accuracy and variance criteria use the scaled and shifted prediction.
    """
    target_values = np.asarray(target_values, dtype=float).reshape(-1)
    raw_mean, raw_sd = source.raw_predictions(target_inputs)
    adjusted_mean = source.alpha * raw_mean + source.beta
    adjusted_sd = abs(source.alpha) * raw_sd
    tau_shape = discordant_tau(raw_mean, target_values) if len(target_values) > 1 else 0.0
    return config.score(tau_shape, accuracy_tau(adjusted_mean, target_values, config.max_rel_error),
                        variance_tau(adjusted_sd, target_values, config.max_rel_variance))


def probabilities_from_scores(scores):
    """
    Normalize non-negative scores into probabilities. When no score is positive the probabilities are uniform.

    Returns
    -------
    probabilities : ndarray
    informative : bool
                  False when the uniform fallback was used.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if len(scores) == 0:
        return scores, False
    total = np.sum(scores)
    if not total > 0:
        return np.full(len(scores), 1.0 / len(scores)), False
    return scores / total, True


def score_and_weight(sources, target_inputs, target_values, config=None, role='objective'):
    """
    Compute the criteria scores of each source and the probability of each being the correct model,
    P_j = C_j / sum_n C_n. Each source is updated with its `criteria_scores` and `probability`.

    Parameters
    ----------
    sources : list
              Transferred source models (`SourceModel`).
    target_inputs : array_like
    target_values : array_like
    config : CriteriaConfig, None
             Defaults to the preset weights of `role`.
    role : str
           'objective' or 'constraint'.

    Returns
    -------
    probabilities : ndarray
    """
    if len(sources) == 0:
        raise ValueError("Need at least one source to weight.")
    config = CriteriaConfig(role=role) if config is None else config
    scores = [criteria_scores(s, target_inputs, target_values, config) for s in sources]
    probabilities, informative = probabilities_from_scores([s.score for s in scores])
    if not informative:
        warnings.warn("No source model scored above zero, falling back to uniform probabilities.",
                      NoInformativeSourceWarning)
    for source, score, p in zip(sources, scores, probabilities):
        source.criteria_scores = score
        source.probability = float(p)
    return probabilities
