import numpy as np

from xferbo.data.doe import Doe, VariableMeta, ConstraintMeta, ProblemSpec, SAMPLERS, evaluate_doe
from xferbo.utils import XferBOConfigException, derive_seed


# Bohachevsky transfer family on [-5, 5]^2
# -----------------------------------------

def bohachevsky_s1(x):
    x1, x2 = x[0], x[1]
    return x1 ** 2 + 2 * x2 ** 2 - 0.3 * np.cos(np.pi * x1) - 0.4 * np.cos(2 * np.pi * x2) + 0.7


def bohachevsky_s2(x):
    x1, x2 = x[0], x[1]
    return x1 ** 2 + 2 * x2 ** 2 - 0.3 * np.cos(np.pi * x1) * np.cos(2 * np.pi * x2)


def bohachevsky_s3(x):
    x1, x2 = x[0], x[1]
    return 2 * x1 ** 2 + 4 * x2 ** 2 - 0.3 * np.cos(3 * np.pi * x1 + 4 * np.pi * x2) - 0.5


def bohachevsky_target(x):
    x1, x2 = x[0], x[1]
    return 0.5 * x1 ** 2 + x2 ** 2 - 0.3 * np.cos(3 * np.pi * x1 + 4 * np.pi * x2) + 0.4


# Multi-fidelity Rosenbrock (MF2.2)
# ---------------------------------

def rosenbrock_medium(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(50 * (x[1:] - x[:-1] ** 2) ** 2 + (-2 - x[:-1]) ** 2) - np.sum(0.5 * x))


def rosenbrock_low(x):
    """
    Low fidelity level. The denominator sums 0.25 x_1 over every dimension, i.e. 10 + 0.25 D x_1, and the
    numerator builds on the medium fidelity level.
    """
    x = np.asarray(x, dtype=float)
    return (rosenbrock_medium(x) - 4 - np.sum(0.5 * x)) / (10 + np.sum(np.full(len(x), 0.25 * x[0])))


def rosenbrock_target(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


class SourceGenerator(object):
    """
    A source problem and how its DOE is drawn. DOEs are regenerated for every seed.
    """
    def __init__(self, spec: ProblemSpec, doe_size: int, sampling='lhs'):
        if sampling not in SAMPLERS:
            raise XferBOConfigException("Sampling must be one of {}, got {}".format(list(SAMPLERS), sampling))
        self.spec = spec
        self.doe_size = int(doe_size)
        self.sampling = sampling

    @property
    def name(self):
        return self.spec.name

    def generate(self, seed, doe_size=None):
        size = self.doe_size if doe_size is None else int(doe_size)
        return evaluate_doe(self.spec, SAMPLERS[self.sampling](self.spec.variables, size, seed))


class StaticSource(object):
    """
    An already evaluated source DOE (e.g. loaded from CSV), handed out unchanged whatever the seed.
    """
    def __init__(self, doe: Doe, name):
        self.doe = doe
        self.name = name

    @property
    def doe_size(self):
        return self.doe.N

    def generate(self, seed, doe_size=None):
        if doe_size is None or int(doe_size) >= self.doe.N:
            return self.doe
        return self.doe.head(doe_size)


class BenchmarkCase(object):
    """
    A target problem, its source problems, and the reference experiment protocol.

    Parameters
    ----------
    name : str
    target : ProblemSpec
    sources : list
              `SourceGenerator` (or `StaticSource`) per source problem.
    iterations : int
    runs : int
    initial_doe_size : int
    initial_sampling : str
                       'uniform' or 'lhs'.
    optimum : float, None
              Known optimal target value, when there is one.
    """
    def __init__(self, name, target: ProblemSpec, sources, iterations, runs, initial_doe_size,
                 initial_sampling='uniform', optimum=None, description=None):
        self.name = name
        self.target = target
        self.sources = list(sources)
        self.iterations = int(iterations)
        self.runs = int(runs)
        self.initial_doe_size = int(initial_doe_size)
        if initial_sampling not in SAMPLERS:
            raise XferBOConfigException("Sampling must be one of {}, got {}".format(list(SAMPLERS),
                                                                                   initial_sampling))
        self.initial_sampling = initial_sampling
        self.optimum = optimum
        self.description = description

    def __str__(self):
        return "{} | target: {} | sources: {}".format(self.name, self.target,
                                                       ', '.join(s.name for s in self.sources))

    @property
    def reference(self):
        return dict(iterations=self.iterations, runs=self.runs, initial_doe_size=self.initial_doe_size,
                    initial_sampling=self.initial_sampling,
                    source_doe_sizes=[s.doe_size for s in self.sources])

    def initial_doe(self, seed, size=None, sampling=None):
        size = self.initial_doe_size if size is None else int(size)
        sampling = self.initial_sampling if sampling is None else sampling
        if sampling not in SAMPLERS:
            raise XferBOConfigException("Sampling must be one of {}, got {}".format(list(SAMPLERS), sampling))
        return evaluate_doe(self.target, SAMPLERS[sampling](self.target.variables, size, seed))

    def source_does(self, seed, doe_size=None):
        return [s.generate(derive_seed(seed, i), doe_size) for i, s in enumerate(self.sources)]

    @property
    def source_names(self):
        return [s.name for s in self.sources]


def _box(names, lower, upper):
    return [VariableMeta(n, lower, upper) for n in names]


def bohachevsky_case():
    """Three homogeneous Bohachevsky-like sources for a Bohachevsky-like target, unconstrained."""
    variables = _box(['x1', 'x2'], -5, 5)
    sources = [SourceGenerator(ProblemSpec(variables, f, name=name, reentrant=True), 50, 'lhs')
               for name, f in (('f_S1', bohachevsky_s1), ('f_S2', bohachevsky_s2), ('f_S3', bohachevsky_s3))]
    return BenchmarkCase('bohachevsky', ProblemSpec(variables, bohachevsky_target, name='f_T', reentrant=True),
                         sources, iterations=20, runs=20, initial_doe_size=2, initial_sampling='uniform',
                         optimum=0.1, description="Bohachevsky transfer family on [-5, 5]^2")


def rosenbrock_mf_case(dims=5):
    """Medium and low fidelity Rosenbrock variants as sources for the Rosenbrock target on [-2, 2]^D."""
    variables = _box(['x{}'.format(i + 1) for i in range(dims)], -2, 2)
    sources = [SourceGenerator(ProblemSpec(variables, rosenbrock_medium, name='h_S1', reentrant=True), 100, 'lhs'),
               SourceGenerator(ProblemSpec(variables, rosenbrock_low, name='h_S2', reentrant=True), 100, 'lhs')]
    return BenchmarkCase('rosenbrock_mf22', ProblemSpec(variables, rosenbrock_target, name='h_T', reentrant=True),
                         sources, iterations=100, runs=20, initial_doe_size=dims, initial_sampling='uniform',
                         optimum=0.0, description="MF2.2 multi-fidelity Rosenbrock, D={}".format(dims))


# Constrained toy problem with heterogeneous sources
# ---------------------------------------------------

def toy_bfl(x):
    return 1.0 - x[0]


def toy_slat_actuator_height(x):
    return x[0] ** 2 + x[1] ** 2 - 9.0


def _toy_s1_objective(x):
    return bohachevsky_s1(x) + 0.2 * x[2]


def _toy_s1_bfl(x):
    return 1.0 - x[0] - 0.05 * x[2]


def _toy_s1_wing_span(x):
    return x[0] ** 2 + x[1] ** 2 - 9.5 + x[2]


def _toy_s2_objective(x):
    return 2 * x[0] ** 2 - 0.3 * np.cos(3 * np.pi * x[0]) - 0.5


def _toy_s2_bfl(x):
    return 1.1 - x[0]


def _toy_s2_gear_height(x):
    return x[0] ** 2 - 8.0


TOY_CONSTRAINTS = [ConstraintMeta('BFL', 'performance'),
                   ConstraintMeta('slat_actuator_height', 'volumetric_integration')]


def constrained_toy_case():
    """
    Bohachevsky-like target under two constraints. The first source has an extra variable `x3`, the second lacks
    `x2`. The 'BFL' constraint exists in both sources, 'slat_actuator_height' in none but its category does.
    """
    variables = _box(['x1', 'x2'], -5, 5)
    target = ProblemSpec(variables, bohachevsky_target,
                         [(TOY_CONSTRAINTS[0], toy_bfl), (TOY_CONSTRAINTS[1], toy_slat_actuator_height)],
                         name='toy_T', reentrant=True)
    s1 = ProblemSpec(variables + [VariableMeta('x3', 0, 1)], _toy_s1_objective,
                     [(ConstraintMeta('BFL', 'performance'), _toy_s1_bfl),
                      (ConstraintMeta('wing_span', 'volumetric_integration'), _toy_s1_wing_span)],
                     name='toy_S1', reentrant=True)
    s2 = ProblemSpec([VariableMeta('x1', -5, 5)], _toy_s2_objective,
                     [(ConstraintMeta('BFL', 'performance'), _toy_s2_bfl),
                      (ConstraintMeta('gear_height', 'volumetric_integration'), _toy_s2_gear_height)],
                     name='toy_S2', reentrant=True)
    return BenchmarkCase('constrained_toy', target, [SourceGenerator(s1, 50, 'lhs'), SourceGenerator(s2, 50, 'lhs')],
                         iterations=25, runs=20, initial_doe_size=3, initial_sampling='lhs',
                         description="Constrained Bohachevsky target with heterogeneous variables and constraints")


SUPPORTED_CASES = {
    'bohachevsky': bohachevsky_case,
    'rosenbrock_mf22': rosenbrock_mf_case,
    'constrained_toy': constrained_toy_case,
}


def get_case(name) -> BenchmarkCase:
    try:
        return SUPPORTED_CASES[name]()
    except KeyError:
        raise XferBOConfigException("No benchmark case called {}, choose from {}".format(name,
                                                                                      list(SUPPORTED_CASES)))
