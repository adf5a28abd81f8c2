import warnings

import numpy as np

from xferbo.data.doe import Doe
from xferbo.metrics.criteria import CriteriaConfig, score_and_weight
from xferbo.surrogates.models import GpModel, GPConfig
from xferbo.utils import XferBOTrainingException, DroppedSourceWarning, as_matrix

VARIANCE_POLICIES = ('TV', 'AV')


def least_squares_transfer(source_preds, target_vals):
    """
    Scale and bias minimizing sum((alpha * s + beta - t)^2). Constant source predictions carry no scale, giving
    alpha = 0 and beta = mean(t).
    """
    s = np.asarray(source_preds, dtype=float).reshape(-1)
    t = np.asarray(target_vals, dtype=float).reshape(-1)
    if len(s) != len(t) or len(s) == 0:
        raise ValueError("Need matching non-empty vectors, got {} and {}".format(len(s), len(t)))
    if np.ptp(s) == 0:
        return 0.0, float(np.mean(t))
    solution = np.linalg.lstsq(np.column_stack([s, np.ones_like(s)]), t, rcond=None)[0]
    return float(solution[0]), float(solution[1])


def fit_transfer(source_gp: GpModel, target_inputs, target_values):
    """
    Fit the scale alpha and bias beta that adjust the source model to the target data (least squares on the
    source predictions at the target inputs).

    Returns
    -------
    alpha : float
    beta : float
    """
    preds, _ = source_gp.predict_many(target_inputs)
    return least_squares_transfer(preds, target_values)


class SourceModel(object):
    """
    A source Gaussian process adjusted to the target: mean alpha * y_s(x) + beta and standard deviation
    |alpha| * s_s(x).
    """
    def __init__(self, gp: GpModel, alpha=1.0, beta=0.0, name=None, leave_one_out=False):
        """
        Parameters
        ----------
        gp : GpModel
        alpha : float
        beta : float
        name : str, None
        leave_one_out : bool
                        Score this model with its leave-one-out predictions on its own training data (used when
                        the target model joins the ensemble).
        """
        self.gp = gp
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.name = name if name is not None else gp.name
        self.leave_one_out = leave_one_out
        self.criteria_scores = None
        self.probability = None

    def __repr__(self):
        return "SourceModel({!r}, alpha={:.4g}, beta={:.4g}, P={})".format(self.name, self.alpha, self.beta,
                                                                          self.probability)

    def raw_predictions(self, x):
        if self.leave_one_out:
            return self.gp.loo_predictions()
        return self.gp.predict_many(x)

    def predict_many(self, x):
        mean, sd = self.gp.predict_many(x)
        return self.alpha * mean + self.beta, abs(self.alpha) * sd

    def predict(self, x):
        mean, sd = self.predict_many(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(sd[0])

    def transferred(self, target_inputs, target_values):
        """A copy with alpha and beta fitted to the target data."""
        if self.leave_one_out:
            return SourceModel(self.gp, 1.0, 0.0, self.name, leave_one_out=True)
        alpha, beta = fit_transfer(self.gp, target_inputs, target_values)
        return SourceModel(self.gp, alpha, beta, self.name)

    def diagnostics(self):
        d = dict(name=self.name, alpha=self.alpha, beta=self.beta, probability=self.probability)
        if self.criteria_scores is not None:
            d.update(self.criteria_scores._asdict())
        return d


class EnsembleSurrogate(object):
    """
    Probability-weighted combination of transferred source models. The predicted standard deviation is the target
    model's ('TV') or the probability-weighted source deviations ('AV'). Without sources, the ensemble is the target
    model.
    """
    def __init__(self, sources, target_gp: GpModel, variance_policy='TV', informative=True, name=None):
        variance_policy = str(variance_policy).upper()
        if variance_policy not in VARIANCE_POLICIES:
            raise ValueError("Variance policy must be one of {}, got {}".format(VARIANCE_POLICIES, variance_policy))
        self.sources = list(sources)
        if any(s.probability is None for s in self.sources):
            raise ValueError("Every ensemble member needs a probability.")
        self.target_gp = target_gp
        self.variance_policy = variance_policy
        self.informative = informative
        self.name = name if name is not None else target_gp.name

    def __str__(self):
        members = ' | '.join('{}: {:.3f}'.format(s.name, s.probability) for s in self.sources)
        return "Ensemble {} ({}) | {}".format(self.name, self.variance_policy, members or 'target only')

    @property
    def probabilities(self):
        return np.array([s.probability for s in self.sources])

    @property
    def D(self):
        return self.target_gp.D

    def predict_many(self, x):
        x = as_matrix(x, self.D)
        if len(self.sources) == 0:
            return self.target_gp.predict_many(x)
        mean = np.zeros(len(x))
        weighted_var = np.zeros(len(x))
        for source in self.sources:
            if source.probability == 0:
                continue
            m, s = source.predict_many(x)
            mean += source.probability * m
            weighted_var += source.probability ** 2 * s ** 2
        if self.variance_policy == 'TV':
            _, sd = self.target_gp.predict_many(x)
        else:
            sd = np.sqrt(weighted_var)
        return mean, sd

    def predict(self, x):
        mean, sd = self.predict_many(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(sd[0])

    def with_target(self, target_gp: GpModel):
        """
        Keep the members, their transfer parameters and probabilities, and swap in a new target model (and the new
        target model as member when the target is part of the ensemble).
        """
        sources = list()
        for s in self.sources:
            member = SourceModel(target_gp if s.leave_one_out else s.gp, s.alpha, s.beta, s.name, s.leave_one_out)
            member.criteria_scores = s.criteria_scores
            member.probability = s.probability
            sources.append(member)
        return EnsembleSurrogate(sources, target_gp, self.variance_policy, self.informative, self.name)

    def diagnostics(self):
        return [s.diagnostics() for s in self.sources]


def ensemble_predict(ensemble: EnsembleSurrogate, x):
    return ensemble.predict(x)


def _as_source_gp(source, index, source_kernel, gp_config):
    if isinstance(source, GpModel):
        return source
    if isinstance(source, SourceModel):
        return source.gp
    doe, column = source if isinstance(source, tuple) else (source, 'objective')
    if not isinstance(doe, Doe):
        raise TypeError("Sources must be GpModels or (Doe, column) pairs, got {}".format(type(source)))
    kernel = source_kernel
    if kernel.upper() == 'AUTO':
        kernel = 'KPLS' if len(doe.masked_variables) > 0 else 'SE'
    return GpModel.from_doe(doe, column, kernel=kernel, config=gp_config,
                            name='source_{}'.format(index))


def build_ensemble(sources, target_doe: Doe, column='objective', criteria=None, role='objective',
                   variance_policy='TV', target_gp=None, gp_config=None, source_kernel='auto',
                   include_target=False):
    """
    Ensemble of surrogates for one output of the target problem: the target model is trained, source models are
    trained (or reused), each is transferred to the target data, scored, and given a probability.

    Parameters
    ----------
    sources : list
              Trained source `GpModel`s (reused as is), or `(Doe, column)` pairs to train on. Source DOEs must already
              be aligned to the target variables.
    target_doe : Doe
    column : str, int
             The target output modelled.
    criteria : CriteriaConfig, None
               Defaults to the preset of `role`.
    role : str
           'objective' or 'constraint'.
    variance_policy : str
                      'TV' or 'AV'.
    target_gp : GpModel, None
                Trained target model, trained here with the SE kernel when not given.
    gp_config : GPConfig, None
    source_kernel : str
                    'auto' (KPLS when the source has masked variables, SE otherwise), 'SE' or 'KPLS'.
    include_target : bool
                     Add the target model as a member, scored on its leave-one-out predictions.

    Returns
    -------
    ensemble : EnsembleSurrogate
    """
    gp_config = GPConfig() if gp_config is None else gp_config
    criteria = CriteriaConfig(role=role) if criteria is None else criteria
    target_values = target_doe.column(column)
    if target_gp is None:
        target_gp = GpModel.from_doe(target_doe, column, kernel='SE', config=gp_config)

    members = list()
    for i, source in enumerate(sources):
        try:
            gp = _as_source_gp(source, i, source_kernel, gp_config)
        except XferBOTrainingException as e:
            warnings.warn("Dropping source {}: {}".format(i, e), DroppedSourceWarning)
            continue
        members.append(SourceModel(gp, name=gp.name or 'source_{}'.format(i)))
    if include_target:
        members.append(SourceModel(target_gp, name='target', leave_one_out=True))

    if len(members) == 0:
        return EnsembleSurrogate(list(), target_gp, variance_policy, informative=False)

    members = [m.transferred(target_doe.inputs, target_values) for m in members]
    score_and_weight(members, target_doe.inputs, target_values, criteria, role)
    informative = any(m.criteria_scores.score > 0 for m in members)
    return EnsembleSurrogate(members, target_gp, variance_policy, informative)
