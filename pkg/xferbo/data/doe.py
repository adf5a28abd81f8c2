import os

import numpy as np
import pandas as pd

from multiprocessing.pool import ThreadPool
from scipy.stats import qmc

from xferbo.data.utils import bounds_array, within_bounds
from xferbo.utils import XferBOBlackboxException

CONSTRAINT_CATEGORIES = ('performance', 'volumetric_integration', 'operational', 'environmental', 'other')

_VARIABLE_PREFIX = 'x_'
_CONSTRAINT_PREFIX = 'c_'
_OBJECTIVE_COLUMN = 'objective'


class VariableMeta(object):
    """
    Meta data of a single design variable: its identifying name and its bounds. Names are what the transfer
    machinery uses to line up design spaces of different problems.
    """
    def __init__(self, name: str, lower: float, upper: float):
        if not isinstance(name, str) or len(name.strip()) == 0:
            raise ValueError("Variable names must be non-empty strings, got {!r}".format(name))
        lower, upper = float(lower), float(upper)
        if not (np.isfinite(lower) and np.isfinite(upper)) or not lower < upper:
            raise ValueError("Variable {} needs finite bounds with lower < upper, got [{}, {}]".format(name, lower,
                                                                                                     upper))
        self.name = name
        self.lower = lower
        self.upper = upper

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def __eq__(self, other):
        return isinstance(other, VariableMeta) and (self.name, self.lower, self.upper) == \
               (other.name, other.lower, other.upper)

    def __hash__(self):
        return hash((self.name, self.lower, self.upper))

    def __repr__(self):
        return "VariableMeta({!r}, {}, {})".format(self.name, self.lower, self.upper)

    def as_dict(self):
        return dict(name=self.name, lower=self.lower, upper=self.upper)


class ConstraintMeta(object):
    """
    Meta data of an inequality constraint (feasible iff value <= 0). The category is the discipline grouping used
    to pair target constraints with source constraints when their names do not match.
    """
    def __init__(self, name: str, category: str = 'other'):
        if not isinstance(name, str) or len(name.strip()) == 0:
            raise ValueError("Constraint names must be non-empty strings, got {!r}".format(name))
        category = str(category).lower()
        if category not in CONSTRAINT_CATEGORIES:
            raise ValueError("Constraint category must be one of {}, not {}".format(CONSTRAINT_CATEGORIES, category))
        self.name = name
        self.category = category

    def __eq__(self, other):
        return isinstance(other, ConstraintMeta) and (self.name, self.category) == (other.name, other.category)

    def __hash__(self):
        return hash((self.name, self.category))

    def __repr__(self):
        return "ConstraintMeta({!r}, {!r})".format(self.name, self.category)

    def as_dict(self):
        return dict(name=self.name, category=self.category)


def _check_unique_names(names, kind):
    lowered = [n.lower() for n in names]
    if len(set(lowered)) != len(lowered):
        raise ValueError("{} names must be unique, got {}".format(kind, names))


def _frozen(array):
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


class Doe(object):
    """
    A design of experiments: the evaluated inputs along with the objective and the constraint outputs. Values are
    kept in the units of the problem (not normalized), and are read-only once constructed.
    """
    def __init__(self, variables, inputs, objective, constraints=None, masked_variables=()):
        """
        Parameters
        ----------
        variables : list
                    Ordered `VariableMeta` for the D columns of `inputs`.
        inputs : array_like
                 N x D matrix of evaluated points.
        objective : array_like
                    Length N objective values.
        constraints : list, None
                      List of `(ConstraintMeta, values)` pairs, each with N values.
        masked_variables : iterable
                           Names of variables that carry no information (filled columns created by alignment).
        """
        self.variables = list(variables)
        if len(self.variables) == 0:
            raise ValueError("A DOE needs at least one variable.")
        _check_unique_names([v.name for v in self.variables], "Variable")

        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, len(self.variables))
        if inputs.ndim != 2 or inputs.shape[1] != len(self.variables) or inputs.shape[0] < 1:
            raise ValueError("Inputs must be an N x {} matrix with N >= 1, got shape {}".format(len(self.variables),
                                                                                             inputs.shape))
        if not np.all(within_bounds(inputs, self.variables)):
            bad = np.nonzero(~within_bounds(inputs, self.variables))[0]
            raise ValueError("DOE rows {} fall outside the variable bounds.".format(bad.tolist()))
        self.inputs = _frozen(inputs)

        objective = np.asarray(objective, dtype=float).reshape(-1)
        if len(objective) != len(inputs):
            raise ValueError("Objective has {} values for {} rows.".format(len(objective), len(inputs)))
        self.objective = _frozen(objective)

        self.constraints = list()
        for meta, values in ([] if constraints is None else constraints):
            values = np.asarray(values, dtype=float).reshape(-1)
            if len(values) != len(inputs):
                raise ValueError("Constraint {} has {} values for {} rows.".format(meta.name, len(values),
                                                                                  len(inputs)))
            self.constraints.append((meta, _frozen(values)))
        _check_unique_names([m.name for m, _ in self.constraints], "Constraint")

        names = set(self.variable_names)
        self.masked_variables = frozenset(n for n in masked_variables if n in names)

    def __len__(self):
        return self.inputs.shape[0]

    def __str__(self):
        return "DOE | {} points | {} variables | {} constraints".format(len(self), self.D, len(self.constraints))

    @property
    def N(self):
        return self.inputs.shape[0]

    @property
    def D(self):
        return self.inputs.shape[1]

    @property
    def variable_names(self):
        return [v.name for v in self.variables]

    @property
    def constraint_metas(self):
        return [m for m, _ in self.constraints]

    @property
    def constraint_values(self):
        """N x m matrix of constraint values (m may be 0)."""
        if len(self.constraints) == 0:
            return np.zeros((self.N, 0))
        return np.column_stack([v for _, v in self.constraints])

    @property
    def bounds(self):
        return bounds_array(self.variables)

    def column(self, key='objective'):
        """
        The output vector for `key`: 'objective', a constraint name (case-insensitive) or a constraint index.
        """
        if isinstance(key, str):
            if key == _OBJECTIVE_COLUMN:
                return self.objective
            for meta, values in self.constraints:
                if meta.name.lower() == key.lower():
                    return values
            raise KeyError("No output column named {} in {}".format(key, self))
        return self.constraints[int(key)][1]

    def feasible_mask(self):
        if len(self.constraints) == 0:
            return np.ones(self.N, dtype=bool)
        return np.all(self.constraint_values <= 0, axis=1)

    def best_feasible_index(self):
        feasible = np.nonzero(self.feasible_mask())[0]
        if len(feasible) == 0:
            return None
        return int(feasible[np.argmin(self.objective[feasible])])

    def append(self, x, objective, constraint_values=()):
        """Returns a new DOE with one more row."""
        constraint_values = list(constraint_values)
        if len(constraint_values) != len(self.constraints):
            raise ValueError("Expected {} constraint values, got {}".format(len(self.constraints),
                                                                           len(constraint_values)))
        return Doe(self.variables, np.vstack([self.inputs, np.asarray(x, dtype=float).reshape(1, -1)]),
                   np.append(self.objective, float(objective)),
                   [(m, np.append(v, float(c))) for (m, v), c in zip(self.constraints, constraint_values)],
                   masked_variables=self.masked_variables)

    def head(self, n):
        n = int(n)
        return Doe(self.variables, self.inputs[:n], self.objective[:n], [(m, v[:n]) for m, v in self.constraints],
                   masked_variables=self.masked_variables)

    def to_frame(self):
        columns = dict()
        for j, name in enumerate(self.variable_names):
            columns[_VARIABLE_PREFIX + name] = self.inputs[:, j]
        columns[_OBJECTIVE_COLUMN] = self.objective
        for meta, values in self.constraints:
            columns[_CONSTRAINT_PREFIX + meta.name] = values
        return pd.DataFrame(columns)

    def to_csv(self, filename):
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, variables=None, constraints=None):
        """
        Rebuild a DOE from a frame laid out as `to_frame()`. Without explicit meta data, bounds are the observed
        column ranges and constraint categories fall back to 'other'.
        """
        x_cols = [c for c in frame.columns if c.startswith(_VARIABLE_PREFIX)]
        c_cols = [c for c in frame.columns if c.startswith(_CONSTRAINT_PREFIX)]
        if _OBJECTIVE_COLUMN not in frame.columns or len(x_cols) == 0:
            raise ValueError("Frame needs x_<name> columns and an objective column, found {}".format(
                list(frame.columns)))
        inputs = frame[x_cols].to_numpy(dtype=float)
        if variables is None:
            variables = list()
            for j, col in enumerate(x_cols):
                lo, hi = inputs[:, j].min(), inputs[:, j].max()
                if hi <= lo:
                    hi = lo + 1.0
                variables.append(VariableMeta(col[len(_VARIABLE_PREFIX):], lo, hi))
        if constraints is None:
            constraints = [ConstraintMeta(col[len(_CONSTRAINT_PREFIX):]) for col in c_cols]
        by_name = {m.name: m for m in constraints}
        pairs = [(by_name.get(col[len(_CONSTRAINT_PREFIX):], ConstraintMeta(col[len(_CONSTRAINT_PREFIX):])),
                  frame[col].to_numpy(dtype=float)) for col in c_cols]
        return cls(variables, inputs, frame[_OBJECTIVE_COLUMN].to_numpy(dtype=float), pairs)

    @classmethod
    def from_csv(cls, filename, variables=None, constraints=None):
        return cls.from_frame(pd.read_csv(filename), variables=variables, constraints=constraints)


class ProblemSpec(object):
    """
    An optimization problem: minimize `objective(x)` subject to `c_i(x) <= 0` over the box defined by the variables.
    """
    def __init__(self, variables, objective, constraints=None, name=None, reentrant=False):
        """
        Parameters
        ----------
        variables : list
                    `VariableMeta` for each design variable.
        objective : callable
                    Blackbox `x -> float`.
        constraints : list, None
                      `(ConstraintMeta, callable)` pairs.
        name : str, None
        reentrant : bool
                    Whether the blackboxes may be called from several threads at once.
        """
        self.variables = list(variables)
        _check_unique_names([v.name for v in self.variables], "Variable")
        self.objective = objective
        self.constraints = list() if constraints is None else list(constraints)
        _check_unique_names([m.name for m, _ in self.constraints], "Constraint")
        self.name = name
        self.reentrant = reentrant

    def __str__(self):
        return "{} | {} variables | {} constraints".format(self.name or 'Problem', self.D, len(self.constraints))

    @property
    def D(self):
        return len(self.variables)

    @property
    def bounds(self):
        return bounds_array(self.variables)

    @property
    def constraint_metas(self):
        return [m for m, _ in self.constraints]

    def evaluate(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(self.objective(x)), [float(c(x)) for _, c in self.constraints]


def lhs_sample(variables, count: int, seed: int = 0):
    """
    Latin hypercube sample: every variable range is cut into `count` equal strata, each of which receives exactly
    one point, placed uniformly at random within the stratum. Columns are paired by independent random
    permutations.

    Parameters
    ----------
    variables : list
                `VariableMeta` of each dimension.
    count : int
            Number of points, >= 1.
    seed : int

    Returns
    -------
    points : ndarray
             count x D matrix in problem units.
    """
    if int(count) < 1:
        raise ValueError("Latin hypercube sampling needs a positive count, got {}".format(count))
    bounds = bounds_array(variables)
    sampler = qmc.LatinHypercube(d=len(bounds), seed=np.random.default_rng(seed))
    unit = sampler.random(int(count))
    return qmc.scale(unit, bounds[:, 0], bounds[:, 1])


def uniform_sample(variables, count: int, seed: int = 0):
    if int(count) < 1:
        raise ValueError("Uniform sampling needs a positive count, got {}".format(count))
    bounds = bounds_array(variables)
    rng = np.random.default_rng(seed)
    return bounds[:, 0] + rng.random((int(count), len(bounds))) * (bounds[:, 1] - bounds[:, 0])


SAMPLERS = {
    'lhs': lhs_sample,
    'uniform': uniform_sample,
}


def _evaluate_row(spec, i, x):
    try:
        return spec.evaluate(x)
    except XferBOBlackboxException as e:
        raise XferBOBlackboxException("Blackbox failed at row {}: {}".format(i, e), row=i, cause=e.cause) from e
    except Exception as e:
        raise XferBOBlackboxException("Blackbox failed at row {}: {!r}".format(i, e), row=i, cause=repr(e)) from e


def evaluate_doe(spec: ProblemSpec, inputs, threads=None):
    """
    Evaluate the objective and every constraint of `spec` once per row of `inputs`, in row order.

    Parameters
    ----------
    spec : ProblemSpec
    inputs : array_like
             N x D matrix within the problem bounds.
    threads : int, None
              Number of threads used when the problem declares itself reentrant. Defaults to the number of CPUs.

    Returns
    -------
    doe : Doe
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != spec.D:
        raise ValueError("Rows need {} coordinates, got {}".format(spec.D, inputs.shape[1]))
    if not np.all(within_bounds(inputs, spec.variables)):
        raise ValueError("Rows {} fall outside the bounds of {}".format(
            np.nonzero(~within_bounds(inputs, spec.variables))[0].tolist(), spec))

    if spec.reentrant and len(inputs) > 1:
        def guarded(i):
            try:
                return _evaluate_row(spec, i, inputs[i])
            except XferBOBlackboxException as e:
                return e

        with ThreadPool(min(len(inputs), threads or os.cpu_count() or 1)) as pool:
            results = pool.map(guarded, range(len(inputs)))
        for r in results:
            if isinstance(r, XferBOBlackboxException):
                raise r
    else:
        results = [_evaluate_row(spec, i, x) for i, x in enumerate(inputs)]

    objective = [r[0] for r in results]
    constraints = [(meta, [r[1][j] for r in results]) for j, meta in enumerate(spec.constraint_metas)]
    return Doe(spec.variables, inputs, objective, constraints)
