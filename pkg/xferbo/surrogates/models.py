import json
import warnings

import numpy as np

from collections import namedtuple
from numpy.linalg import LinAlgError
from scipy.linalg import cholesky, cho_solve
from scipy.optimize import minimize
from scipy.stats import qmc

from xferbo.data.doe import Doe, VariableMeta
from xferbo.data.utils import bounds_array, to_unit, standardize
from xferbo.surrogates.kernels import SeKernelParams, KplsParams, correlation, kernel_from_dict
from xferbo.utils import XferBOConfigException, XferBOTrainingException, DegenerateDataWarning, as_matrix

# Returned by the training objective for hyperparameters that cannot be factorized
FAILED_OBJECTIVE = 1e300
# Added to the negative log likelihood of candidates that do not interpolate their training data
INTERPOLATION_PENALTY = 1e6

KERNELS = ('SE', 'KPLS')

_Profile = namedtuple('_Profile', ['cholesky_factor', 'nugget', 'mean_bias', 'variance', 'alpha_vector',
                                   'log_likelihood'])

HyperparameterStart = namedtuple('HyperparameterStart', ['index', 'initial', 'initial_log_likelihood',
                                                         'final', 'log_likelihood'])


class GPConfig(object):
    """
    Options of Gaussian process training.

    Parameters
    ----------
    n_starts : int
               Number of starting points of the hyperparameter search, spread by Latin hypercube sampling over the
               log-hyperparameter box.
    max_evaluations : int
                      Cap on likelihood evaluations of each local simplex search.
    hyperparameter_bounds : tuple
                            (lower, upper) bounds of the length scales (or KPLS thetas), in normalized input units.
    nugget : float
             Initial diagonal jitter relative to the unit correlation.
    max_nugget : float
                 Largest jitter tried (by factors of 10) before training is declared failed.
    max_components : int, None
                     Most KPLS components tried. Defaults to min(4, D).
    seed : int
           Seed for the starting points.
    interpolation_tolerance : float
                              Largest gap allowed between a trained mean and the training values, in output units
                              (scaled by the output standard deviation when that exceeds 1).
    """
    def __init__(self, n_starts=10, max_evaluations=400, hyperparameter_bounds=(1e-2, 1e2), nugget=1e-10,
                 max_nugget=1e-6, max_components=None, seed=0, interpolation_tolerance=1e-7):
        if int(n_starts) < 1:
            raise XferBOConfigException("n_starts must be at least 1, got {}".format(n_starts))
        if int(max_evaluations) < 1:
            raise XferBOConfigException("max_evaluations must be at least 1, got {}".format(max_evaluations))
        lo, hi = (float(b) for b in hyperparameter_bounds)
        if not 0 < lo < hi:
            raise XferBOConfigException("hyperparameter_bounds must satisfy 0 < lower < upper, got {}".format(
                hyperparameter_bounds))
        if not 0 < float(nugget) <= float(max_nugget):
            raise XferBOConfigException("Need 0 < nugget <= max_nugget, got {} and {}".format(nugget, max_nugget))
        if max_components is not None and int(max_components) < 1:
            raise XferBOConfigException("max_components must be at least 1, got {}".format(max_components))
        if not float(interpolation_tolerance) > 0:
            raise XferBOConfigException("interpolation_tolerance must be positive, got {}".format(
                interpolation_tolerance))
        self.n_starts = int(n_starts)
        self.max_evaluations = int(max_evaluations)
        self.hyperparameter_bounds = (lo, hi)
        self.nugget = float(nugget)
        self.max_nugget = float(max_nugget)
        self.max_components = None if max_components is None else int(max_components)
        self.seed = int(seed)
        self.interpolation_tolerance = float(interpolation_tolerance)

    @property
    def log_bounds(self):
        return np.log(self.hyperparameter_bounds[0]), np.log(self.hyperparameter_bounds[1])

    def components_for(self, D):
        return min(4, D) if self.max_components is None else min(self.max_components, D)

    def reseeded(self, seed):
        d = self.as_dict()
        d['seed'] = seed
        return GPConfig(**d)

    def as_dict(self):
        return dict(n_starts=self.n_starts, max_evaluations=self.max_evaluations,
                    hyperparameter_bounds=list(self.hyperparameter_bounds), nugget=self.nugget,
                    max_nugget=self.max_nugget, max_components=self.max_components, seed=self.seed,
                    interpolation_tolerance=self.interpolation_tolerance)


def factorize(corr, nugget=1e-10, max_nugget=1e-6):
    """
    Lower Cholesky factor of `corr` plus a diagonal nugget. The nugget is multiplied by 10 after each failed
    factorization, up to `max_nugget`.

    Returns
    -------
    factor : ndarray
    nugget : float
             The nugget that was actually used.
    """
    n = corr.shape[0]
    while True:
        try:
            return cholesky(corr + nugget * np.eye(n), lower=True), nugget
        except LinAlgError:
            if nugget >= max_nugget:
                raise XferBOTrainingException("Covariance matrix is not positive definite, even with a nugget of "
                                              "{:.1e}".format(nugget))
            nugget = min(10 * nugget, max_nugget)


def _log_det(factor):
    return 2.0 * np.sum(np.log(np.diag(factor)))


def log_marginal_likelihood(inputs, outputs, params, mean_bias, nugget=1e-10, max_nugget=1e-6, mask=None):
    """
    Log marginal likelihood of `outputs` observed at `inputs`,

        -1/2 (N ln(2 pi s2) + ln det K + (Y - 1 b)' K^-1 (Y - 1 b) / s2)

    with K the kernel correlation matrix (plus nugget), s2 the kernel variance and b the constant mean.

    Parameters
    ----------
    inputs : array_like
             N x D points, in the coordinates the kernel is applied to.
    outputs : array_like
    params : SeKernelParams, KplsParams
    mean_bias : float
    nugget : float
    max_nugget : float
    mask : array_like, None
           Boolean per dimension, masked dimensions do not enter the kernel.
    """
    inputs = as_matrix(inputs)
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    scales = params.scales()
    if mask is not None:
        scales = np.where(np.asarray(mask, dtype=bool), 0.0, scales)
    factor, _ = factorize(correlation(inputs, inputs, scales), nugget, max_nugget)
    resid = outputs - mean_bias
    quad = resid @ cho_solve((factor, True), resid)
    n = len(outputs)
    return float(-0.5 * (n * np.log(2 * np.pi * params.variance) + _log_det(factor) + quad / params.variance))


def _profile(unit_inputs, z, scales, nugget, max_nugget):
    """
    Factorizes the correlation matrix for `scales` and profiles out the constant mean (generalized least squares)
    and the process variance. The returned likelihood is the concentrated one.
    """
    factor, nugget = factorize(correlation(unit_inputs, unit_inputs, scales), nugget, max_nugget)
    ones = np.ones(len(z))
    r_ones = cho_solve((factor, True), ones)
    beta = float((r_ones @ z) / (r_ones @ ones))
    resid = z - beta
    alpha = cho_solve((factor, True), resid)
    variance = float(resid @ alpha) / len(z)
    if not variance > 0:
        lml = -np.inf
    else:
        lml = -0.5 * (len(z) * np.log(2 * np.pi * variance) + _log_det(factor) + len(z))
    return _Profile(factor, nugget, beta, variance, alpha, float(lml))


class GpModel(object):
    """
    A trained Gaussian process with a constant mean. Inputs are normalized to the unit box of the variable bounds and
    outputs are standardized internally; everything exposed by `predict` is in the units of the problem.
    """
    def __init__(self, variables, inputs, outputs, kernel, nugget=1e-10, max_nugget=1e-6, mask=None, name=None):
        """
        Build the model for fixed kernel hyperparameters. The mean bias is the generalized least squares estimate,
        the kernel variance is used as given (in standardized output units).

        Parameters
        ----------
        variables : list
                    `VariableMeta` of the input columns, their bounds define the normalization.
        inputs : array_like
                 N x D training points.
        outputs : array_like
                  N training values.
        kernel : SeKernelParams, KplsParams
        nugget : float
        max_nugget : float
        mask : array_like, None
               Boolean per variable, masked variables have no influence on predictions.
        name : str, None
        """
        self.variables = list(variables)
        self.inputs = np.array(as_matrix(inputs, len(self.variables)))
        self.outputs = np.asarray(outputs, dtype=float).reshape(-1).copy()
        if len(self.outputs) != len(self.inputs) or len(self.outputs) < 1:
            raise ValueError("Need as many outputs as inputs (at least one), got {} and {}".format(
                len(self.outputs), len(self.inputs)))
        if kernel.D != self.D:
            raise ValueError("Kernel built for {} dimensions, data has {}".format(kernel.D, self.D))
        self.kernel = kernel
        self.mask = np.zeros(self.D, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
        self.name = name
        self.inputs.flags.writeable = False
        self.outputs.flags.writeable = False
        self.mask.flags.writeable = False

        bounds = bounds_array(self.variables)
        self._lower, self._upper = bounds[:, 0], bounds[:, 1]
        self._unit_inputs = to_unit(self.inputs, self._lower, self._upper)
        z, self.y_mean, self.y_std = standardize(self.outputs)
        self._scales = np.where(self.mask, 0.0, kernel.scales())

        profile = _profile(self._unit_inputs, z, self._scales, nugget, max_nugget)
        self.cholesky_factor = profile.cholesky_factor
        self.nugget = profile.nugget
        self.mean_bias = profile.mean_bias
        self.alpha_vector = profile.alpha_vector
        self._max_nugget = max_nugget
        resid = z - self.mean_bias
        self.log_likelihood = float(-0.5 * (self.N * np.log(2 * np.pi * kernel.variance) +
                                            _log_det(self.cholesky_factor) + resid @ self.alpha_vector /
                                            kernel.variance))
        self.training_starts = list()

    def __str__(self):
        return "{} | {} kernel | N={} D={} | log-ML {:.3f}".format(self.name or 'GP', self.kind, self.N, self.D,
                                                                   self.log_likelihood)

    @property
    def kind(self):
        return self.kernel.kind

    @property
    def N(self):
        return self.inputs.shape[0]

    @property
    def D(self):
        return self.inputs.shape[1]

    @property
    def variance(self):
        return self.kernel.variance

    @property
    def bias(self):
        """The constant mean in output units."""
        return self.y_mean + self.y_std * self.mean_bias

    @property
    def sigma(self):
        """Prior standard deviation of the process in output units."""
        return self.y_std * np.sqrt(self.kernel.variance)

    def predict_many(self, x):
        """
        Predictive means and standard deviations at the rows of `x`.

        Returns
        -------
        mean : ndarray
        sd : ndarray
        """
        x = as_matrix(x, self.D)
        r = correlation(to_unit(x, self._lower, self._upper), self._unit_inputs, self._scales)
        mean = self.mean_bias + r @ self.alpha_vector
        r_solved = cho_solve((self.cholesky_factor, True), r.T)
        var = self.kernel.variance * (1.0 - np.sum(r.T * r_solved, axis=0))
        return self.y_mean + self.y_std * mean, self.y_std * np.sqrt(np.maximum(var, 0.0))

    def predict(self, x):
        mean, sd = self.predict_many(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(sd[0])

    def loo_predictions(self):
        """
        Closed-form leave-one-out predictions (hyperparameters and mean bias held fixed).

        Returns
        -------
        mean : ndarray
               Prediction at each training point from a model trained without it.
        sd : ndarray
        """
        inverse_diag = np.diag(cho_solve((self.cholesky_factor, True), np.eye(self.N)))
        resid = self.alpha_vector / inverse_diag
        mean = self.outputs - self.y_std * resid
        sd = self.y_std * np.sqrt(self.kernel.variance / inverse_diag)
        return mean, sd

    def with_data(self, inputs, outputs):
        """Same hyperparameters, different training data (not retrained)."""
        return GpModel(self.variables, inputs, outputs, self.kernel, self.nugget, self._max_nugget, self.mask,
                       self.name)

    def to_dict(self):
        return dict(kind=self.kind, name=self.name, kernel=self.kernel.as_dict(), nugget=self.nugget,
                    max_nugget=self._max_nugget, mask=self.mask.tolist(),
                    normalization=dict(lower=self._lower.tolist(), upper=self._upper.tolist(), y_mean=self.y_mean,
                                       y_std=self.y_std, mean_bias=self.mean_bias),
                    variables=[v.as_dict() for v in self.variables], inputs=self.inputs.tolist(),
                    outputs=self.outputs.tolist(), log_likelihood=self.log_likelihood)

    @classmethod
    def from_dict(cls, d: dict):
        return cls([VariableMeta(**v) for v in d['variables']], d['inputs'], d['outputs'],
                   kernel_from_dict(d['kernel']), nugget=d['nugget'], max_nugget=d.get('max_nugget', d['nugget']),
                   mask=d.get('mask'), name=d.get('name'))

    def save(self, filename):
        with open(filename, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, filename):
        with open(filename, 'r') as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def from_doe(cls, doe: Doe, column='objective', kernel='SE', config=None, mask=None, name=None):
        """
        Train a model of one output column of a DOE.

        Parameters
        ----------
        doe : Doe
        column : str, int
                 'objective', a constraint name or a constraint index.
        kernel : str
                 'SE' or 'KPLS'.
        config : GPConfig, None
        mask : array_like, None
               Defaults to the masked variables recorded in the DOE.
        """
        if mask is None:
            mask = [v.name in doe.masked_variables for v in doe.variables]
        if name is None:
            name = column if isinstance(column, str) else doe.constraint_metas[int(column)].name
        return train_gp(doe.variables, doe.inputs, doe.column(column), kernel=kernel, config=config, mask=mask,
                        name=name)


def _start_points(dims, config: GPConfig):
    lo, hi = config.log_bounds
    sampler = qmc.LatinHypercube(d=dims, seed=np.random.default_rng(config.seed))
    return qmc.scale(sampler.random(config.n_starts), [lo] * dims, [hi] * dims)


def optimize_hyperparameters(unit_inputs, z, scales_for, dims, config: GPConfig, tolerance=None):
    """
    Multi-start maximization of the concentrated log likelihood over `dims` log-hyperparameters. Each start is
    refined by a bounded Nelder-Mead simplex. With a `tolerance`, candidates whose nugget moves the mean at some
    training point by more than `tolerance` (standardized units) are penalized by `INTERPOLATION_PENALTY` per decade
    of excess, so the recorded likelihoods of such candidates are penalized values.

    Parameters
    ----------
    unit_inputs : ndarray
    z : ndarray
        Standardized outputs.
    scales_for : callable
                 Maps a vector of log-hyperparameters to the per-dimension kernel scales.
    dims : int
    config : GPConfig
    tolerance : float, None

    Returns
    -------
    best : HyperparameterStart
    starts : list
             One `HyperparameterStart` per start, in start order.
    """
    lo, hi = config.log_bounds

    def objective(log_params):
        try:
            profile = _profile(unit_inputs, z, scales_for(log_params), config.nugget, config.max_nugget)
        except (XferBOTrainingException, LinAlgError, ValueError, FloatingPointError):
            return FAILED_OBJECTIVE
        if not np.isfinite(profile.log_likelihood):
            return FAILED_OBJECTIVE
        value = -profile.log_likelihood
        if tolerance is not None:
            shift = profile.nugget * np.max(np.abs(profile.alpha_vector))
            if shift > tolerance:
                value += INTERPOLATION_PENALTY * (1.0 + np.log10(shift / tolerance))
        return value

    starts = list()
    for i, p0 in enumerate(_start_points(dims, config)):
        initial = objective(p0)
        result = minimize(objective, p0, method='Nelder-Mead', bounds=[(lo, hi)] * dims,
                          options=dict(maxfev=config.max_evaluations, xatol=1e-4, fatol=1e-9))
        final, value = np.clip(result.x, lo, hi), float(result.fun)
        if not value <= initial:
            final, value = p0, initial
        starts.append(HyperparameterStart(i, p0, -initial, final, -value))

    best = min(starts, key=lambda s: (-s.log_likelihood, s.index))
    if -best.log_likelihood >= FAILED_OBJECTIVE:
        raise XferBOTrainingException("All {} starts of the hyperparameter search failed.".format(len(starts)))
    return best, starts


def interpolation_error(unit_inputs, z, scales, profile: _Profile):
    """Largest gap between the posterior mean and `z` at the training points, in standardized units."""
    fitted = profile.mean_bias + correlation(unit_inputs, unit_inputs, scales) @ profile.alpha_vector
    return float(np.max(np.abs(fitted - z)))


def sharpen_until_interpolating(unit_inputs, z, scales_for, log_params, toward, tolerance, config: GPConfig):
    """
    Moves `log_params` toward `toward`, the end of the hyperparameter box with the shortest correlation range, by
    steps of ln 2 until the posterior mean reproduces `z` within `tolerance`. The nugget shifts the mean at training
    point i by nugget * alpha_i, which grows with the condition number of the correlation matrix.

    Returns
    -------
    log_params : ndarray
    error : float
            The remaining `interpolation_error`.
    """
    log_params = np.array(log_params, dtype=float)
    step = np.log(2.0)
    while True:
        scales = scales_for(log_params)
        profile = _profile(unit_inputs, z, scales, config.nugget, config.max_nugget)
        error = interpolation_error(unit_inputs, z, scales, profile)
        if error <= tolerance or np.allclose(log_params, toward, rtol=0, atol=1e-12):
            return log_params, error
        log_params = log_params + np.clip(toward - log_params, -step, step)


def train_gp(variables, inputs, outputs, kernel='SE', config=None, mask=None, name=None, weights=None):
    """
    Train a Gaussian process by maximizing the log marginal likelihood over the kernel hyperparameters. The constant
    mean and the process variance are estimated in closed form for each candidate.

    Parameters
    ----------
    variables : list
    inputs : array_like
    outputs : array_like
    kernel : str
             'SE' or 'KPLS'.
    config : GPConfig, None
    mask : array_like, None
           Boolean per variable. Masked variables have no influence on the model.
    name : str, None
    weights : array_like, None
              Fixed h x D KPLS weights. Without them, KPLS weights and the number of components are fitted.

    Returns
    -------
    model : GpModel
    """
    config = GPConfig() if config is None else config
    kernel = str(kernel).upper()
    if kernel not in KERNELS:
        raise ValueError("Kernel must be one of {}, got {}".format(KERNELS, kernel))
    variables = list(variables)
    inputs = as_matrix(inputs, len(variables))
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    if len(outputs) < 1 or len(outputs) != len(inputs):
        raise ValueError("Need N >= 1 matching inputs and outputs, got {} and {}".format(len(inputs), len(outputs)))
    mask = np.zeros(len(variables), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if np.all(mask):
        raise ValueError("Every variable is masked, nothing to train on.")

    if kernel == 'KPLS' and weights is None:
        from xferbo.surrogates.kpls import train_kpls
        return train_kpls(variables, inputs, outputs, config=config, mask=mask, name=name)

    bounds = bounds_array(variables)
    unit_inputs = to_unit(inputs, bounds[:, 0], bounds[:, 1])
    z, _, y_std = standardize(outputs)
    free = ~mask
    lo, hi = config.log_bounds

    if kernel == 'KPLS':
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        template = KplsParams(weights, np.ones(len(weights)))

        def scales_for(log_params):
            return np.where(mask, 0.0, template.with_thetas(np.exp(log_params)).scales())

        def params_for(log_params, variance):
            return KplsParams(weights, np.exp(log_params), variance)

        dims = template.n_components
        # Larger thetas shorten the correlation range
        sharpest = hi
    else:
        def scales_for(log_params):
            scales = np.zeros(len(variables))
            scales[free] = 1.0 / (2.0 * np.exp(log_params))
            return scales

        def params_for(log_params, variance):
            length_scales = np.ones(len(variables))
            length_scales[free] = np.exp(log_params)
            return SeKernelParams(variance, length_scales)

        dims = int(np.sum(free))
        sharpest = lo

    if len(outputs) == 1 or np.ptp(outputs) == 0:
        warnings.warn("Training data of {} is degenerate ({} points, output range {}), hyperparameters left at "
                      "their defaults.".format(name or 'GP', len(outputs), np.ptp(outputs)), DegenerateDataWarning)
        return GpModel(variables, inputs, outputs, params_for(np.zeros(dims), 1.0), config.nugget,
                       config.max_nugget, mask, name)

    tolerance = config.interpolation_tolerance * max(1.0, y_std) / y_std
    best, starts = optimize_hyperparameters(unit_inputs, z, scales_for, dims, config, tolerance)
    log_params, error = sharpen_until_interpolating(unit_inputs, z, scales_for, best.final, sharpest, tolerance,
                                                    config)
    if error > tolerance:
        warnings.warn("{} misses its training data by {:.2e} (standardized) even at the shortest correlation "
                      "range.".format(name or 'GP', error), DegenerateDataWarning)
    profile = _profile(unit_inputs, z, scales_for(log_params), config.nugget, config.max_nugget)
    variance = max(profile.variance, np.finfo(float).tiny)
    model = GpModel(variables, inputs, outputs, params_for(log_params, variance), config.nugget, config.max_nugget,
                    mask, name)
    model.training_starts = starts
    return model
