import numpy as np

from scipy.spatial.distance import cdist


def _positive_finite(values, what):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.size == 0 or not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError("{} must be strictly positive and finite, got {}".format(what, values))
    return values


class SeKernelParams(object):
    """
    Hyperparameters of the squared exponential kernel

        k(x, x') = variance * prod_d exp(-(x_d - x'_d)^2 / (2 l_d))

    where the `length_scales` l_d scale the squared distance directly.
    """
    kind = 'SE'

    def __init__(self, variance, length_scales):
        self.variance = float(_positive_finite(variance, "Kernel variance")[0])
        self.length_scales = _positive_finite(length_scales, "Length scales")

    @property
    def D(self):
        return len(self.length_scales)

    def scales(self):
        """Per-dimension factors s_d multiplying the squared coordinate differences."""
        return 1.0 / (2.0 * self.length_scales)

    @classmethod
    def from_log(cls, log_params, variance=1.0):
        return cls(variance, np.exp(log_params))

    def log_params(self):
        return np.log(self.length_scales)

    def with_variance(self, variance):
        return SeKernelParams(variance, self.length_scales)

    def as_dict(self):
        return dict(kind=self.kind, variance=self.variance, length_scales=self.length_scales.tolist())

    def __repr__(self):
        return "SeKernelParams(variance={:.4g}, length_scales={})".format(self.variance,
                                                                         np.array2string(self.length_scales,
                                                                                         precision=4))


class KplsParams(object):
    """
    Hyperparameters of the partial least squares kernel

        k(x, x') = variance * prod_l exp(-theta_l * sum_d (w_ld x_d - w_ld x'_d)^2)

    with one row of `weights` per retained component.
    """
    kind = 'KPLS'

    def __init__(self, weights, thetas, variance=1.0):
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        if not np.all(np.isfinite(weights)):
            raise ValueError("KPLS weights must be finite.")
        self.weights = weights
        self.thetas = _positive_finite(thetas, "KPLS thetas")
        if len(self.thetas) != weights.shape[0]:
            raise ValueError("Got {} thetas for {} components.".format(len(self.thetas), weights.shape[0]))
        if not 1 <= self.n_components <= self.D:
            raise ValueError("Number of components must be within [1, {}], got {}".format(self.D, self.n_components))
        self.variance = float(_positive_finite(variance, "Kernel variance")[0])

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def D(self):
        return self.weights.shape[1]

    def scales(self):
        return np.sum(self.thetas[:, np.newaxis] * self.weights ** 2, axis=0)

    @classmethod
    def from_log(cls, log_params, weights, variance=1.0):
        return cls(weights, np.exp(log_params), variance)

    def log_params(self):
        return np.log(self.thetas)

    def with_variance(self, variance):
        return KplsParams(self.weights, self.thetas, variance)

    def with_thetas(self, thetas):
        return KplsParams(self.weights, thetas, self.variance)

    def as_dict(self):
        return dict(kind=self.kind, variance=self.variance, weights=self.weights.tolist(),
                    thetas=self.thetas.tolist())

    def __repr__(self):
        return "KplsParams(h={}, variance={:.4g}, thetas={})".format(self.n_components, self.variance,
                                                                    np.array2string(self.thetas, precision=4))


def kernel_from_dict(d: dict):
    kind = d.get('kind', 'SE').upper()
    if kind == SeKernelParams.kind:
        return SeKernelParams(d['variance'], d['length_scales'])
    if kind == KplsParams.kind:
        return KplsParams(d['weights'], d['thetas'], d['variance'])
    raise ValueError("Unknown kernel kind {}".format(kind))


def correlation(x1, x2, scales):
    """
    Correlation matrix exp(-sum_d s_d (x1_d - x2_d)^2) between the rows of `x1` and `x2`. Dimensions with a zero
    scale contribute exactly nothing, whatever their coordinates.
    """
    root = np.sqrt(np.asarray(scales, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float)) * root
    x2 = np.atleast_2d(np.asarray(x2, dtype=float)) * root
    return np.exp(-cdist(x1, x2, 'sqeuclidean'))


def covariance(x1, x2, params):
    return params.variance * correlation(x1, x2, params.scales())


def se_kernel(x, x2, params: SeKernelParams):
    x, x2 = np.asarray(x, dtype=float).reshape(-1), np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape or len(x) != params.D:
        raise ValueError("Both points need {} coordinates.".format(params.D))
    return float(params.variance * np.prod(np.exp(-(x - x2) ** 2 / (2 * params.length_scales))))


def kpls_kernel(x, x2, params: KplsParams):
    x, x2 = np.asarray(x, dtype=float).reshape(-1), np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape or len(x) != params.D:
        raise ValueError("Both points need {} coordinates.".format(params.D))
    projected = np.sum((params.weights * x - params.weights * x2) ** 2, axis=1)
    return float(params.variance * np.prod(np.exp(-params.thetas * projected)))
