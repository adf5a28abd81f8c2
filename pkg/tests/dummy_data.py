import os
import sys

import numpy as np

from pathlib import Path

from xferbo.data.doe import Doe, VariableMeta, ConstraintMeta, ProblemSpec, lhs_sample, evaluate_doe
from xferbo.optim.acquisition import AcquisitionConfig
from xferbo.optim.processes import OptimizerConfig
from xferbo.surrogates.kernels import SeKernelParams
from xferbo.surrogates.models import GpModel, GPConfig

SEED = 1234
TESTS_DIRECTORY = Path(__file__).resolve().parent
STUB_BLACKBOX = TESTS_DIRECTORY / 'stub_blackbox.py'

# Small budgets keep the optimizer tests quick
FAST_GP = GPConfig(n_starts=3, max_evaluations=150)
FAST_ACQUISITION = AcquisitionConfig(candidate_count=300, refine_steps=20)

LONG_TESTS = bool(os.environ.get('XFERBO_LONG_TESTS'))

# Creation Functions
# ------------------


def unit_box(dims, lower=0.0, upper=1.0, prefix='x'):
    return [VariableMeta('{}{}'.format(prefix, i + 1), lower, upper) for i in range(dims)]


def smooth_function(x):
    x = np.atleast_2d(x)
    return np.sum(np.sin(3 * x) + 0.5 * x ** 2, axis=1)


def sphere(x):
    return float(np.sum(np.asarray(x, dtype=float) ** 2))


def spread_points(n, dims, rng, min_distance=0.02):
    """Random unit-box points with no pair closer than `min_distance`, keeping the kernel matrices well conditioned."""
    if dims == 1:
        jitter = rng.uniform(-0.2, 0.2, size=n) / n
        return np.clip((np.arange(n) + 0.5) / n + jitter, 0, 1).reshape(-1, 1)
    while True:
        points = rng.random((n, dims))
        gaps = np.linalg.norm(points[:, np.newaxis] - points[np.newaxis], axis=-1) + 2 * np.eye(n)
        if gaps.min() >= min_distance:
            return points


def create_random_doe(n, dims, seed=SEED, f=smooth_function):
    rng = np.random.default_rng(seed)
    inputs = spread_points(n, dims, rng)
    return Doe(unit_box(dims), inputs, f(inputs))


def create_fixed_gp(doe: Doe, scales, variance=1.0, column='objective', name=None):
    """GP with given kernel scales (s_d = 1 / (2 l_d)), no hyperparameter search."""
    length_scales = 1.0 / (2.0 * np.asarray(scales, dtype=float))
    return GpModel(doe.variables, doe.inputs, doe.column(column), SeKernelParams(variance, length_scales),
                   name=name)


def create_line_source(f, n=30, name='source'):
    """Fixed-hyperparameter GP of a 1-D function on a dense grid of [0, 1]."""
    inputs = np.linspace(0, 1, n).reshape(-1, 1)
    doe = Doe(unit_box(1), inputs, [f(x) for x in inputs])
    return create_fixed_gp(doe, [20.0], name=name)


def create_line_target(f, n=10):
    inputs = (np.arange(n) + 0.5).reshape(-1, 1) / n
    return Doe(unit_box(1), inputs, [f(x) for x in inputs])


def create_constrained_spec():
    """Sphere on [-1, 1]^2 subject to x1 >= 0.2 (feasible iff 0.2 - x1 <= 0)."""
    variables = unit_box(2, -1, 1)
    return ProblemSpec(variables, sphere, [(ConstraintMeta('lower_x1', 'performance'), lambda x: 0.2 - x[0])],
                       name='constrained_sphere', reentrant=True)


def create_initial_doe(spec: ProblemSpec, n=4, seed=SEED):
    return evaluate_doe(spec, lhs_sample(spec.variables, n, seed))


def fast_optimizer_config(**kwargs):
    kwargs.setdefault('max_iter', 3)
    kwargs.setdefault('gp', FAST_GP)
    kwargs.setdefault('acquisition', FAST_ACQUISITION)
    kwargs.setdefault('verbose', False)
    return OptimizerConfig(**kwargs)


def stub_command(mode, *args):
    return [sys.executable, str(STUB_BLACKBOX), mode] + [str(a) for a in args]


def fast_experiment(**entries):
    """Entries of a small Bohachevsky experiment file."""
    experiment = dict(case='bohachevsky', methods=['VBO', 'TLBO-ETL-TV'], runs=2, iterations=2, seed=7,
                      source_doe_size=12, gp=dict(n_starts=2, max_evaluations=80),
                      acquisition=dict(candidate_count=150, refine_steps=10))
    experiment.update(entries)
    return experiment


# Check functions
# ---------------

def dense_gp_oracle(model: GpModel, x):
    """
    Predictions of `model` computed with explicit matrix inverses, from the training data and hyperparameters only.
    """
    bounds = np.array([[v.lower, v.upper] for v in model.variables])
    lower, upper = bounds[:, 0], bounds[:, 1]
    u = (model.inputs - lower) / (upper - lower)
    ux = (np.atleast_2d(x) - lower) / (upper - lower)
    s = model.kernel.scales()
    y = model.outputs
    y_mean, y_std = np.mean(y), np.std(y)
    z = (y - y_mean) / y_std

    def corr(a, b):
        return np.exp(-np.sum(s * (a[:, np.newaxis, :] - b[np.newaxis, :, :]) ** 2, axis=-1))

    K = corr(u, u) + model.nugget * np.eye(len(u))
    K_inv = np.linalg.inv(K)
    ones = np.ones(len(u))
    bias = (ones @ K_inv @ z) / (ones @ K_inv @ ones)
    r = corr(ux, u)
    mean = bias + r @ K_inv @ (z - bias)
    var = model.kernel.variance * (1 - np.sum((r @ K_inv) * r, axis=1))
    sign, log_det = np.linalg.slogdet(K)
    resid = z - bias
    n = len(z)
    lml = -0.5 * (n * np.log(2 * np.pi * model.kernel.variance) + log_det + resid @ K_inv @ resid /
                  model.kernel.variance)
    return y_mean + y_std * mean, y_std ** 2 * np.maximum(var, 0), lml


def brute_force_discordant(s, t):
    count = 0
    for m in range(len(s)):
        for k in range(1, len(s)):
            if (s[m] < s[k]) != (t[m] < t[k]):
                count += 1
    return count / len(s)
