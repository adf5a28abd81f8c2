import warnings

import numpy as np

from collections import OrderedDict, namedtuple

from xferbo.data.doe import Doe, VariableMeta
from xferbo.surrogates.models import GpModel, GPConfig
from xferbo.utils import XferBOAlignmentException, BroadConstraintMatchWarning

TIERS = ('name', 'category', 'broad')

ConstraintMatch = namedtuple('ConstraintMatch', ['target', 'tier', 'pairs'])
ConstraintMatch.__doc__ = """
The source constraint columns selected for one target constraint. `pairs` lists `(source index, column index)`,
`tier` is the rule that selected them: 'name', 'category' or 'broad' (None when no source has constraints).
"""


class AlignmentMap(object):
    """
    How the variables of a source problem line up with the target variables. Variables are matched by name (case
    insensitive). Target variables absent from the source are masked, source variables absent from the target are
    dropped.
    """
    def __init__(self, source_variables, target_variables):
        self.source_variables = list(source_variables)
        self.target_variables = list(target_variables)
        lookup = {v.name.lower(): i for i, v in enumerate(self.source_variables)}
        self.matches = OrderedDict((v.name, lookup.get(v.name.lower())) for v in self.target_variables)
        target_names = {v.name.lower() for v in self.target_variables}
        self.dropped_source_variables = [v.name for v in self.source_variables if v.name.lower() not in target_names]

    def __str__(self):
        return "Alignment | matched: {} | masked: {} | dropped: {}".format(self.matched, self.masked,
                                                                         self.dropped_source_variables)

    @property
    def matched(self):
        return [name for name, idx in self.matches.items() if idx is not None]

    @property
    def masked(self):
        return [name for name, idx in self.matches.items() if idx is None]

    @property
    def mask(self):
        return np.array([idx is None for idx in self.matches.values()])

    @property
    def homogeneous(self):
        return len(self.masked) == 0 and len(self.dropped_source_variables) == 0

    def aligned_variables(self):
        """
        Target-ordered variables for the aligned source. Matched variables span the union of the source and target
        bounds, masked ones keep the target bounds.
        """
        aligned = list()
        for target, idx in zip(self.target_variables, self.matches.values()):
            if idx is None:
                aligned.append(target)
            else:
                source = self.source_variables[idx]
                aligned.append(VariableMeta(target.name, min(target.lower, source.lower),
                                            max(target.upper, source.upper)))
        return aligned

    def as_dict(self):
        return dict(matched=self.matched, masked=self.masked, dropped=list(self.dropped_source_variables))


def alignment_map(source_variables, target_variables):
    return AlignmentMap(source_variables, target_variables)


def align_source_doe(source: Doe, target_variables):
    """
    Express a source DOE over the target variables, in the target order.

    Parameters
    ----------
    source : Doe
    target_variables : list
                       `VariableMeta` of the target problem.

    Returns
    -------
    aligned : Doe
              Matched columns are copied, masked columns are filled with the midpoint of the target bounds and
              recorded in `aligned.masked_variables`. Outputs are unchanged.
    mask : ndarray
           Boolean per target variable.
    """
    amap = alignment_map(source.variables, target_variables)
    if len(amap.matched) == 0:
        raise XferBOAlignmentException("Source shares no variable with the target ({} vs {}).".format(
            source.variable_names, [v.name for v in target_variables]))
    inputs = np.empty((source.N, len(amap.target_variables)))
    masked = set()
    for j, (target, idx) in enumerate(zip(amap.target_variables, amap.matches.values())):
        if idx is None:
            inputs[:, j] = target.midpoint
            masked.add(target.name)
        else:
            inputs[:, j] = source.inputs[:, idx]
            if source.variables[idx].name in source.masked_variables:
                masked.add(target.name)
    aligned = Doe(amap.aligned_variables(), inputs, source.objective, source.constraints, masked_variables=masked)
    return aligned, np.array([v.name in masked for v in aligned.variables])


def build_masked_source_gp(aligned: Doe, mask=None, column='objective', config=None, name=None):
    """
    KPLS model of an aligned source DOE. The PLS weights are fitted on the unmasked columns only and are exactly
    zero for masked variables, so predictions do not depend on them.
    """
    if mask is None:
        mask = [v.name in aligned.masked_variables for v in aligned.variables]
    return GpModel.from_doe(aligned, column, kernel='KPLS', config=GPConfig() if config is None else config,
                            mask=mask, name=name)


def select_source_kernel(amap: AlignmentMap, source_kernel='auto'):
    """'auto' keeps the squared exponential kernel for homogeneous sources and uses masked KPLS otherwise."""
    source_kernel = str(source_kernel).upper()
    if source_kernel == 'AUTO':
        return 'SE' if amap.homogeneous else 'KPLS'
    if source_kernel not in ('SE', 'KPLS'):
        raise ValueError("Source kernel must be 'auto', 'SE' or 'KPLS', got {}".format(source_kernel))
    return source_kernel


def match_constraints(target_constraints, sources, warn=True):
    """
    Select, for each target constraint, the source constraint columns that model it: those with the same name,
    else those of the same category, else every source constraint.

    Parameters
    ----------
    target_constraints : list
                         `ConstraintMeta` of the target problem.
    sources : list
              Source `Doe`s (or anything with `constraint_metas`).
    warn : bool
           Warn when a constraint falls back to the broad match.

    Returns
    -------
    matches : list
              One `ConstraintMatch` per target constraint, in order.
    """
    columns = [(i, j, meta) for i, source in enumerate(sources) for j, meta in enumerate(source.constraint_metas)]
    matches = list()
    for target in target_constraints:
        by_name = [(i, j) for i, j, meta in columns if meta.name.lower() == target.name.lower()]
        if by_name:
            matches.append(ConstraintMatch(target, 'name', by_name))
            continue
        by_category = [(i, j) for i, j, meta in columns if meta.category == target.category]
        if by_category:
            matches.append(ConstraintMatch(target, 'category', by_category))
            continue
        everything = [(i, j) for i, j, _ in columns]
        if everything and warn:
            warnings.warn("No source constraint shares the name or category ({}) of {}, using all {} source "
                          "constraints.".format(target.category, target.name, len(everything)),
                          BroadConstraintMatchWarning)
        matches.append(ConstraintMatch(target, 'broad' if everything else None, everything))
    return matches


def alignment_report(maps, matches, sources=None, kernels=None):
    """
    JSON-ready description of how each source was aligned and how each target constraint was matched.

    Parameters
    ----------
    maps : list
           One `AlignmentMap` per source.
    matches : list
              `ConstraintMatch` per target constraint.
    sources : list, None
              Source DOEs (or specs) used to name the matched constraint columns.
    kernels : list, None
              Kernel kind used for each source.
    """
    report = dict(sources=list(), constraints=list())
    for i, amap in enumerate(maps):
        entry = dict(source=i, **amap.as_dict())
        if kernels is not None:
            entry['kernel'] = kernels[i]
        report['sources'].append(entry)
    for match in matches:
        pairs = list()
        for i, j in match.pairs:
            pair = dict(source=i, column=j)
            if sources is not None:
                pair['name'] = sources[i].constraint_metas[j].name
            pairs.append(pair)
        report['constraints'].append(dict(target=match.target.name, category=match.target.category,
                                          tier=match.tier, pairs=pairs))
    return report
