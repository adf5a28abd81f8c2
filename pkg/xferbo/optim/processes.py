import json
import time
import warnings

# Swap these two for Ipython/Jupyter
# import tqdm
# import tqdm.notebook as tqdm
import tqdm.auto as tqdm

import numpy as np
from pandas import DataFrame, read_csv
from collections import OrderedDict

from xferbo.data.doe import Doe, ProblemSpec, lhs_sample
from xferbo.metrics.criteria import CriteriaConfig
from xferbo.optim.acquisition import AcquisitionConfig, maximize_constrained
from xferbo.surrogates.ensemble import build_ensemble, VARIANCE_POLICIES
from xferbo.surrogates.models import GpModel, GPConfig
from xferbo.transforms.heterogeneity import align_source_doe, alignment_map, match_constraints, \
    select_source_kernel, alignment_report
from xferbo.utils import XferBOConfigException, XferBOBlackboxException, XferBOAlignmentException, \
    XferBOTrainingException, DroppedSourceWarning, derive_seed, inclusive_quartiles

MODES = ('VBO', 'TLBO')

# Seed purposes, combined with the run seed and iteration by `derive_seed`
_ACQUISITION = 0
_RETRY = 1
_PREDICTION_ERROR = 2
_TARGET_GP = 3
_SOURCE_GP = 4


class OptimizerConfig(object):
    """
    Options of a Bayesian optimization run.

    Parameters
    ----------
    max_iter : int
               Blackbox evaluations after the initial DOE.
    mode : str
           'VBO' or 'TLBO'.
    alternation_interval : int, None
                           TLBO only: every k-th iteration uses the plain target models instead of the ensembles.
    variance_policy : str
                      'TV' (target model deviation) or 'AV' (weighted source deviations).
    seed : int
           Base seed, every random choice of the run derives from it.
    criteria : CriteriaConfig, dict, None
               Scoring of sources for the objective ensemble.
    constraint_criteria : CriteriaConfig, dict, None
                          Scoring of sources for the constraint ensembles.
    acquisition : AcquisitionConfig, dict, None
    gp : GPConfig, dict, None
    source_kernel : str
                    'auto', 'SE' or 'KPLS'.
    include_target : bool
                     Add the target model as an ensemble member.
    freeze_probabilities_after : int, None
                                 Keep transfer parameters and probabilities fixed after this iteration.
    cost_per_eval : float
                    Synthetic cost of one blackbox evaluation, accumulated in the history time axis.
    prediction_error_iteration : int, None
                                 Iteration at which the surrogates are compared with the true blackboxes.
    prediction_error_points : int
                              Size of the Latin hypercube test set for that comparison.
    verbose : bool
    """
    def __init__(self, max_iter=20, mode='VBO', alternation_interval=None, variance_policy='TV', seed=0,
                 criteria=None, constraint_criteria=None, acquisition=None, gp=None, source_kernel='auto',
                 include_target=False, freeze_probabilities_after=None, cost_per_eval=1.0,
                 prediction_error_iteration=None, prediction_error_points=100, verbose=True):
        if int(max_iter) < 0:
            raise XferBOConfigException("max_iter must be non-negative, got {}".format(max_iter))
        mode = str(mode).upper()
        if mode not in MODES:
            raise XferBOConfigException("Mode must be one of {}, got {}".format(MODES, mode))
        if alternation_interval is not None:
            if mode != 'TLBO':
                raise XferBOConfigException("alternation_interval only applies to TLBO.")
            if int(alternation_interval) < 1:
                raise XferBOConfigException("alternation_interval must be positive, got {}".format(
                    alternation_interval))
            alternation_interval = int(alternation_interval)
        variance_policy = str(variance_policy).upper()
        if variance_policy not in VARIANCE_POLICIES:
            raise XferBOConfigException("Variance policy must be one of {}, got {}".format(VARIANCE_POLICIES,
                                                                                        variance_policy))
        if str(source_kernel).upper() not in ('AUTO', 'SE', 'KPLS'):
            raise XferBOConfigException("source_kernel must be 'auto', 'SE' or 'KPLS', got {}".format(
                source_kernel))
        if freeze_probabilities_after is not None and int(freeze_probabilities_after) < 1:
            raise XferBOConfigException("freeze_probabilities_after must be positive.")
        if float(cost_per_eval) < 0:
            raise XferBOConfigException("cost_per_eval must be non-negative.")
        if int(prediction_error_points) < 1:
            raise XferBOConfigException("prediction_error_points must be positive.")

        self.max_iter = int(max_iter)
        self.mode = mode
        self.alternation_interval = alternation_interval
        self.variance_policy = variance_policy
        self.seed = int(seed)
        self.criteria = criteria if isinstance(criteria, CriteriaConfig) else \
            CriteriaConfig.from_dict(criteria, role='objective')
        if isinstance(constraint_criteria, CriteriaConfig):
            self.constraint_criteria = constraint_criteria
        elif constraint_criteria is None and isinstance(criteria, CriteriaConfig):
            self.constraint_criteria = criteria.for_role('constraint')
        else:
            self.constraint_criteria = CriteriaConfig.from_dict(criteria if constraint_criteria is None and
                                                                isinstance(criteria, dict) else constraint_criteria,
                                                                role='constraint')
        self.acquisition = acquisition if isinstance(acquisition, AcquisitionConfig) else \
            AcquisitionConfig(**(acquisition or {}))
        self.gp = gp if isinstance(gp, GPConfig) else GPConfig(**(gp or {}))
        self.source_kernel = str(source_kernel).upper()
        self.include_target = bool(include_target)
        self.freeze_probabilities_after = None if freeze_probabilities_after is None else \
            int(freeze_probabilities_after)
        self.cost_per_eval = float(cost_per_eval)
        self.prediction_error_iteration = None if prediction_error_iteration is None else \
            int(prediction_error_iteration)
        self.prediction_error_points = int(prediction_error_points)
        self.verbose = verbose

    def as_dict(self):
        return dict(max_iter=self.max_iter, mode=self.mode, alternation_interval=self.alternation_interval,
                    variance_policy=self.variance_policy, seed=self.seed, criteria=self.criteria.as_dict(),
                    constraint_criteria=self.constraint_criteria.as_dict(),
                    acquisition=self.acquisition.as_dict(), gp=self.gp.as_dict(), source_kernel=self.source_kernel,
                    include_target=self.include_target, freeze_probabilities_after=self.freeze_probabilities_after,
                    cost_per_eval=self.cost_per_eval, prediction_error_iteration=self.prediction_error_iteration,
                    prediction_error_points=self.prediction_error_points)


class RunHistory(object):
    """
    Every evaluation of a run, initial DOE included (iteration 0), with the best feasible objective so far. TLBO
    iterations also carry the per-source diagnostics of each ensemble.

    The `wall_time` column is a synthetic time axis: the cumulative `cost` of the evaluations so far, in units of
    `OptimizerConfig.cost_per_eval` (with the default cost of 1.0, the number of evaluations). It is deterministic
    for a seed. The measured seconds each evaluation took are kept as `elapsed` in the JSON sidecar.
    """
    def __init__(self, variable_names, constraint_names, method=None, seed=None):
        self.variable_names = list(variable_names)
        self.constraint_names = list(constraint_names)
        self.method = method
        self.seed = seed
        self.records = list()
        self.extras = OrderedDict()

    def __len__(self):
        return len(self.records)

    def __str__(self):
        best = self.best_feasible()
        return "{} history | {} evaluations | best: {}".format(self.method or 'Run', len(self),
                                                              'none' if best is None else '{:.6g}'.format(best[1]))

    @property
    def best_so_far(self):
        return np.array([r['best_feasible'] for r in self.records])

    @property
    def iterations(self):
        return np.array([r['iter'] for r in self.records])

    def append(self, iteration, x, objective, constraints, cost=0.0, elapsed=0.0, step=None, probabilities=None):
        constraints = [float(c) for c in constraints]
        feasible = all(c <= 0 for c in constraints)
        previous = self.records[-1]['best_feasible'] if self.records else np.inf
        best = min(previous, float(objective)) if feasible else previous
        wall_time = (self.records[-1]['wall_time'] if self.records else 0.0) + float(cost)
        record = dict(iter=int(iteration), x=np.asarray(x, dtype=float).copy(), objective=float(objective),
                      constraints=constraints, feasible=feasible, best_feasible=best, wall_time=wall_time,
                      elapsed=float(elapsed), step=step, probabilities=probabilities)
        self.records.append(record)
        return record

    def best_feasible(self):
        return best_feasible(self)

    def to_frame(self):
        columns = OrderedDict()
        columns['iter'] = [r['iter'] for r in self.records]
        columns['best_feasible'] = [r['best_feasible'] for r in self.records]
        columns['objective'] = [r['objective'] for r in self.records]
        columns['feasible'] = [int(r['feasible']) for r in self.records]
        columns['wall_time'] = [r['wall_time'] for r in self.records]
        for j, name in enumerate(self.variable_names):
            columns['x_' + name] = [r['x'][j] for r in self.records]
        for j, name in enumerate(self.constraint_names):
            columns['c_' + name] = [r['constraints'][j] for r in self.records]
        return DataFrame(columns)

    def to_csv(self, filename):
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')

    def sidecar(self):
        return dict(method=self.method, seed=self.seed, extras=self.extras,
                    iterations=[dict(iter=r['iter'], step=r['step'], elapsed=r['elapsed'],
                                     probabilities=r['probabilities']) for r in self.records if r['iter'] > 0])

    def to_json(self, filename):
        with open(filename, 'w') as f:
            json.dump(self.sidecar(), f, indent=2, default=_json_default)

    @classmethod
    def from_csv(cls, filename, method=None):
        frame = read_csv(filename)
        x_cols = [c for c in frame.columns if c.startswith('x_')]
        c_cols = [c for c in frame.columns if c.startswith('c_')]
        history = cls([c[2:] for c in x_cols], [c[2:] for c in c_cols], method=method)
        for _, row in frame.iterrows():
            history.records.append(dict(iter=int(row['iter']), x=row[x_cols].to_numpy(dtype=float),
                                        objective=float(row['objective']),
                                        constraints=[float(row[c]) for c in c_cols], feasible=bool(row['feasible']),
                                        best_feasible=float(row['best_feasible']), wall_time=float(row['wall_time']),
                                        elapsed=0.0, step=None, probabilities=None))
        return history


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError("Cannot serialize {}".format(type(o)))


def best_feasible(history):
    """
    The evaluated point with the lowest objective among those satisfying every constraint.

    Returns
    -------
    best : tuple, None
           `(x, objective)`, or None without any feasible evaluation.
    """
    feasible = [r for r in history.records if r['feasible']]
    if len(feasible) == 0:
        return None
    best = min(feasible, key=lambda r: r['objective'])
    return best['x'], best['objective']


class BaseOptimizer(object):
    """
    Constrained Bayesian optimization loop: at each iteration surrogates of the objective and every constraint are
    built on the current DOE, the constrained expected improvement is maximized, and the chosen point is evaluated
    with the true blackboxes and added to the DOE. Subclasses decide how surrogates are built.
    """
    method = None

    def __init__(self, spec: ProblemSpec, config=None):
        self.spec = spec
        self.config = OptimizerConfig() if config is None else config

    @classmethod
    def standard_logging(cls, metrics: dict, start_message="End of Iteration"):
        if start_message.rstrip()[-1] != '|':
            start_message = start_message.rstrip() + " |"
        for m in metrics:
            if isinstance(metrics[m], bool):
                start_message += " {}: {} |".format(m, metrics[m])
            else:
                start_message += " {}: {:.4g} |".format(m, metrics[m])
        tqdm.tqdm.write(start_message)

    def target_models(self, doe: Doe, iteration):
        """Squared exponential models of the objective and every constraint of the current DOE."""
        objective = GpModel.from_doe(doe, 'objective', kernel='SE',
                                     config=self.config.gp.reseeded(derive_seed(self.config.seed, iteration,
                                                                                _TARGET_GP, 0)))
        constraints = [GpModel.from_doe(doe, j, kernel='SE',
                                        config=self.config.gp.reseeded(derive_seed(self.config.seed, iteration,
                                                                                   _TARGET_GP, j + 1)))
                       for j in range(len(doe.constraints))]
        return objective, constraints

    def build_surrogates(self, doe: Doe, iteration):
        """
        Returns
        -------
        objective : surrogate
        constraints : list
        step : str
               Which kind of step the surrogates make ('VBO' or 'TLBO').
        probabilities : dict, None
                        Ensemble diagnostics per output.
        """
        raise NotImplementedError

    @staticmethod
    def incumbent(doe: Doe):
        """Best feasible objective of the DOE, or the best objective while nothing is feasible."""
        idx = doe.best_feasible_index()
        if idx is None:
            return float(np.min(doe.objective))
        return float(doe.objective[idx])

    def _evaluate(self, x):
        objective, constraints = self.spec.evaluate(x)
        if not np.isfinite(objective) or not np.all(np.isfinite(constraints)):
            raise XferBOBlackboxException("Non-finite blackbox output at {}".format(x), cause='non-finite')
        return objective, constraints

    def _prediction_errors(self, objective, constraints, iteration):
        test = lhs_sample(self.spec.variables, self.config.prediction_error_points,
                          derive_seed(self.config.seed, iteration, _PREDICTION_ERROR))
        truth = [self._evaluate(x) for x in test]
        errors = OrderedDict()
        outputs = [('objective', objective, [t[0] for t in truth])]
        outputs += [(meta.name, c, [t[1][j] for t in truth])
                    for j, (meta, c) in enumerate(zip(self.spec.constraint_metas, constraints))]
        for name, surrogate, values in outputs:
            absolute = np.abs(surrogate.predict_many(test)[0] - np.asarray(values))
            q1, median, q3 = inclusive_quartiles(absolute)
            errors[name] = dict(q1=q1, median=median, q3=q3, mean=float(np.mean(absolute)),
                                max=float(np.max(absolute)))
        return errors

    def fit(self, initial_doe: Doe, step_callback=None):
        """
        Run the optimization from an initial DOE.

        Parameters
        ----------
        initial_doe : Doe
                      Evaluated initial design, at least one point.
        step_callback : callable
                        Called after every iteration with the new history record: fn(record) -> None

        Returns
        -------
        history : RunHistory
        """
        if len(initial_doe) < 1:
            raise ValueError("The initial DOE must not be empty.")
        config = self.config
        doe = initial_doe
        history = RunHistory(doe.variable_names, [m.name for m in doe.constraint_metas], method=self.method,
                             seed=config.seed)
        for i in range(doe.N):
            history.append(0, doe.inputs[i], doe.objective[i], doe.constraint_values[i], cost=config.cost_per_eval,
                           step='initial')

        pbar = tqdm.trange(1, config.max_iter + 1, desc=self.method or "Iteration", unit='evals',
                           disable=not config.verbose)
        for iteration in pbar:
            start = time.perf_counter()
            objective, constraints, step, probabilities = self.build_surrogates(doe, iteration)
            y_min = self.incumbent(doe)

            if config.prediction_error_iteration == iteration:
                history.extras['prediction_error'] = dict(iteration=iteration,
                                                          errors=self._prediction_errors(objective, constraints,
                                                                                         iteration))

            x = maximize_constrained(objective, constraints, self.spec.variables, y_min, config.acquisition,
                                     seed=derive_seed(config.seed, iteration, _ACQUISITION))
            try:
                f, c = self._evaluate(x)
            except Exception as e:
                tqdm.tqdm.write("Blackbox failed at iteration {} ({!r}), resampling the candidate.".format(iteration,
                                                                                                         e))
                history.extras.setdefault('failures', list()).append(dict(iteration=iteration, x=x.tolist(),
                                                                          error=repr(e)))
                x = maximize_constrained(objective, constraints, self.spec.variables, y_min, config.acquisition,
                                         seed=derive_seed(config.seed, iteration, _RETRY))
                try:
                    f, c = self._evaluate(x)
                except Exception as e2:
                    raise XferBOBlackboxException("Blackbox failed twice at iteration {}: {!r}".format(iteration, e2),
                                                  row=doe.N, cause=getattr(e2, 'cause', repr(e2))) from e2

            doe = doe.append(x, f, c)
            elapsed = time.perf_counter() - start
            record = history.append(iteration, x, f, c, cost=config.cost_per_eval, elapsed=elapsed, step=step,
                                    probabilities=probabilities)
            pbar.set_postfix(dict(best=record['best_feasible']))
            if config.verbose:
                self.standard_logging(dict(objective=f, feasible=record['feasible'], best=record['best_feasible']),
                                      "{}: Iteration {} ({})".format(self.method, iteration, step))
            if callable(step_callback):
                step_callback(record)

        self.doe = doe
        return history


class VanillaBO(BaseOptimizer):
    """Constrained Bayesian optimization on squared exponential models of the target data alone."""
    method = 'VBO'

    def build_surrogates(self, doe: Doe, iteration):
        objective, constraints = self.target_models(doe, iteration)
        return objective, constraints, 'VBO', None


class TransferBO(BaseOptimizer):
    """
    Constrained Bayesian optimization on ensembles of transferred source models. Source designs are aligned to the
    target variables and source models are trained once; transfer parameters and probabilities are refitted at
    every iteration on the target data.
    """
    method = 'TLBO'

    def __init__(self, spec: ProblemSpec, source_does, config=None, source_names=None):
        """
        Parameters
        ----------
        spec : ProblemSpec
               The target problem.
        source_does : list
                      Evaluated source `Doe`s, with their own variables and constraints. Without any, every
                      iteration makes the same choice VBO would.
        config : OptimizerConfig, None
        source_names : list, None
        """
        super().__init__(spec, config)
        self.source_names = list(source_names) if source_names is not None else \
            ['source_{}'.format(i) for i in range(len(source_does))]
        self.sources = list()
        maps = list()
        for name, source in zip(self.source_names, source_does):
            try:
                aligned, _ = align_source_doe(source, spec.variables)
            except XferBOAlignmentException as e:
                warnings.warn("Dropping {}: {}".format(name, e), DroppedSourceWarning)
                continue
            self.sources.append((name, aligned))
            maps.append(alignment_map(source.variables, spec.variables))

        self.kernels = [select_source_kernel(m, self.config.source_kernel) for m in maps]
        self.constraint_matches = match_constraints(spec.constraint_metas, [d for _, d in self.sources])
        self.report = alignment_report(maps, self.constraint_matches, [d for _, d in self.sources], self.kernels)
        for entry, (name, _) in zip(self.report['sources'], self.sources):
            entry['name'] = name

        self.objective_models = list()
        for i, (name, aligned) in enumerate(self.sources):
            model = self._train_source(i, aligned, 'objective', name)
            if model is not None:
                self.objective_models.append(model)
        self.constraint_models = list()
        for match in self.constraint_matches:
            models = list()
            for i, j in match.pairs:
                name, aligned = self.sources[i]
                model = self._train_source(i, aligned, j, '{}:{}'.format(name, aligned.constraint_metas[j].name))
                if model is not None:
                    models.append(model)
            self.constraint_models.append(models)

        if len(self.objective_models) == 0 and all(len(m) == 0 for m in self.constraint_models):
            warnings.warn("No usable source remains, transfer optimization reduces to VBO.", DroppedSourceWarning)
        self._frozen = None

    def _train_source(self, i, aligned, column, name):
        column_index = 0 if column == 'objective' else column + 1
        config = self.config.gp.reseeded(derive_seed(self.config.seed, 0, _SOURCE_GP, i, column_index))
        try:
            return GpModel.from_doe(aligned, column, kernel=self.kernels[i], config=config, name=name)
        except XferBOTrainingException as e:
            warnings.warn("Dropping model {}: {}".format(name, e), DroppedSourceWarning)
            return None

    def _vbo_step(self, iteration):
        k = self.config.alternation_interval
        return k is not None and iteration % k == 0

    def build_surrogates(self, doe: Doe, iteration):
        config = self.config
        objective_gp, constraint_gps = self.target_models(doe, iteration)
        if self._vbo_step(iteration):
            return objective_gp, constraint_gps, 'VBO', None

        if self._frozen is not None:
            objective = self._frozen[0].with_target(objective_gp)
            constraints = [e.with_target(gp) for e, gp in zip(self._frozen[1], constraint_gps)]
        else:
            objective = build_ensemble(self.objective_models, doe, 'objective', config.criteria, 'objective',
                                       config.variance_policy, target_gp=objective_gp, gp_config=config.gp,
                                       include_target=config.include_target)
            constraints = [build_ensemble(models, doe, j, config.constraint_criteria, 'constraint',
                                          config.variance_policy, target_gp=gp, gp_config=config.gp,
                                          include_target=config.include_target)
                           for j, (models, gp) in enumerate(zip(self.constraint_models, constraint_gps))]
            if config.freeze_probabilities_after is not None and iteration >= config.freeze_probabilities_after:
                self._frozen = (objective, constraints)

        probabilities = OrderedDict(objective=objective.diagnostics())
        for meta, ensemble in zip(self.spec.constraint_metas, constraints):
            probabilities[meta.name] = ensemble.diagnostics()
        return objective, constraints, 'TLBO', probabilities

    def fit(self, initial_doe: Doe, step_callback=None):
        self._frozen = None
        history = super().fit(initial_doe, step_callback)
        history.extras['alignment'] = self.report
        return history


def optimizer_for(spec: ProblemSpec, config: OptimizerConfig, source_does=None, source_names=None):
    if config.mode == 'VBO':
        return VanillaBO(spec, config)
    return TransferBO(spec, source_does or [], config, source_names)


def run_vbo(spec: ProblemSpec, initial_doe: Doe, config=None):
    config = OptimizerConfig(mode='VBO') if config is None else config
    return VanillaBO(spec, config).fit(initial_doe)


def run_tlbo(spec: ProblemSpec, source_does, initial_target_doe: Doe, config=None, source_names=None):
    config = OptimizerConfig(mode='TLBO') if config is None else config
    return TransferBO(spec, source_does, config, source_names).fit(initial_target_doe)
