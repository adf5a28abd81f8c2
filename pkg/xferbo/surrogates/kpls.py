import warnings

import numpy as np

from sklearn.cross_decomposition import PLSRegression

from xferbo.data.utils import bounds_array, to_unit, standardize
from xferbo.surrogates.kernels import KplsParams
from xferbo.surrogates.models import GPConfig, train_gp
from xferbo.utils import DegenerateDataWarning, as_matrix


def uniform_weights(mask):
    """A single component weighting every unmasked variable equally."""
    mask = np.asarray(mask, dtype=bool)
    weights = np.zeros((1, len(mask)))
    weights[0, ~mask] = 1.0 / np.sqrt(np.sum(~mask))
    return weights


def pls_directions(unit_inputs, outputs, mask, max_components):
    """
    Partial least squares directions of the unmasked columns, computed by the NIPALS recursion (each component
    maximizes the covariance between the deflated inputs and outputs).

    Returns
    -------
    weights : ndarray
              h x D matrix of unit-norm directions, h <= max_components. Columns of masked variables are exactly zero.
    """
    mask = np.asarray(mask, dtype=bool)
    free = ~mask
    n = int(min(max_components, np.sum(free), len(outputs) - 1))
    pls = PLSRegression(n_components=n, scale=False)
    with warnings.catch_warnings():
        # Raised when the output is fully explained before the last component
        warnings.simplefilter('ignore')
        pls.fit(unit_inputs[:, free], np.asarray(outputs, dtype=float).reshape(-1, 1))
    rotations = np.asarray(pls.x_rotations_, dtype=float)
    norms = np.linalg.norm(rotations, axis=0)
    keep = np.isfinite(norms) & (norms > 1e-12)
    weights = np.zeros((int(np.sum(keep)), len(mask)))
    weights[:, free] = (rotations[:, keep] / norms[keep]).T
    return weights


def _loo_error(model):
    loo_mean, _ = model.loo_predictions()
    return float(np.mean((loo_mean - model.outputs) ** 2))


def _select_components(variables, inputs, outputs, config, mask, name):
    bounds = bounds_array(variables)
    unit_inputs = to_unit(inputs, bounds[:, 0], bounds[:, 1])
    z, _, _ = standardize(outputs)
    directions = pls_directions(unit_inputs, z, mask, config.components_for(int(np.sum(~mask))))
    if len(directions) == 0:
        directions = uniform_weights(mask)

    best_model, best_error = None, np.inf
    for h in range(1, len(directions) + 1):
        model = train_gp(variables, inputs, outputs, kernel='KPLS', config=config, mask=mask, name=name,
                         weights=directions[:h])
        error = _loo_error(model)
        if error < best_error or best_model is None:
            best_model, best_error = model, error
    return best_model


def fit_kpls_weights(variables, inputs, outputs, max_components=None, mask=None, config=None):
    """
    Fit the KPLS projection of a data set: PLS directions of the unmasked variables, and the number of components h
    that minimizes the leave-one-out error of the resulting Gaussian process.

    Parameters
    ----------
    variables : list
    inputs : array_like
             N x D points, N >= 3.
    outputs : array_like
    max_components : int, None
                     Defaults to min(4, D).
    mask : array_like, None
    config : GPConfig, None

    Returns
    -------
    params : KplsParams
             Weights of the selected components, thetas and variance left at one.
    """
    config = GPConfig() if config is None else config
    if max_components is not None:
        d = config.as_dict()
        d['max_components'] = max_components
        config = GPConfig(**d)
    inputs = as_matrix(inputs, len(variables))
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    mask = np.zeros(len(variables), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if len(outputs) < 3:
        raise ValueError("KPLS weights need at least 3 points, got {}".format(len(outputs)))
    if np.ptp(outputs) == 0:
        warnings.warn("Constant output, KPLS falls back to a single uniform component.", DegenerateDataWarning)
        return KplsParams(uniform_weights(mask), [1.0])
    model = _select_components(variables, inputs, outputs, config, mask, None)
    return KplsParams(model.kernel.weights, np.ones(model.kernel.n_components))


def train_kpls(variables, inputs, outputs, config=None, mask=None, name=None):
    """
    Train a Gaussian process with the KPLS kernel, selecting the number of components by leave-one-out error. Data
    sets too small for PLS (fewer than 3 points) or with a constant output use one uniform component.
    """
    config = GPConfig() if config is None else config
    mask = np.zeros(len(variables), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    if len(outputs) < 3 or np.ptp(outputs) == 0:
        return train_gp(variables, inputs, outputs, kernel='KPLS', config=config, mask=mask, name=name,
                        weights=uniform_weights(mask))
    return _select_components(variables, as_matrix(inputs, len(variables)), outputs, config, mask, name)
