import os
import yaml
from yamlinclude import YamlIncludeConstructor
import tqdm

from parse import parse
from pathlib import Path

from xferbo.benchmarks.cases import get_case
from xferbo.configuratron.extensions import external_case
from xferbo.data.doe import SAMPLERS
from xferbo.metrics.criteria import CriteriaConfig
from xferbo.optim.acquisition import AcquisitionConfig
from xferbo.optim.processes import OptimizerConfig
from xferbo.surrogates.ensemble import VARIANCE_POLICIES
from xferbo.surrogates.models import GPConfig
from xferbo.utils import XferBOConfigException

YamlIncludeConstructor.add_to_loader_class(loader_class=yaml.FullLoader)

SEED_VARIABLE = 'XFERBO_SEED'
DEFAULT_METHODS = ('VBO', 'TLBO-ETL-TV')


class ExperimentAnnotations:
    """
    Entries of an experiment file that xferbo has no use for itself, such as authors, tags or plotting options.
    Keys become attributes and nested mappings become annotations in turn.
    """
    def __init__(self, entries: dict):
        self._entries = dict(entries)
        self.__dict__.update({k: _annotation(v) for k, v in self._entries.items()})

    def __repr__(self):
        return "ExperimentAnnotations({})".format(', '.join(str(k) for k in self.keys()))

    def keys(self):
        return list(self._entries)

    def __getitem__(self, key):
        return self.__dict__[key]

    def as_dict(self):
        return dict(self._entries)


def _annotation(value):
    if isinstance(value, dict):
        return ExperimentAnnotations(value)
    if isinstance(value, list):
        return [_annotation(v) for v in value]
    return value


def annotate(config, entries: dict):
    """Attach each of `entries` to `config` as an attribute."""
    config.__dict__.update({k: _annotation(v) for k, v in entries.items()})


class MethodSpec:
    """
    An optimizer named the way results are reported: 'VBO', or 'TLBO-ETL-' followed by the variance policy ('TV'
    or 'AV'), optionally with '-ALT<k>' to fall back on plain target models every k-th iteration.
    """
    _TRANSFER_FORMATS = ('TLBO-ETL-{policy}-ALT{interval:d}', 'TLBO-ETL-{policy}')

    def __init__(self, name: str):
        self.name = str(name).strip().upper()
        self.alternation_interval = None
        if self.name == 'VBO':
            self.mode = 'VBO'
            self.variance_policy = 'TV'
            return
        self.mode = 'TLBO'
        for fmt in self._TRANSFER_FORMATS:
            parsed = parse(fmt, self.name)
            if parsed is not None:
                self.variance_policy = parsed['policy']
                self.alternation_interval = parsed.named.get('interval')
                break
        else:
            raise XferBOConfigException("Unknown method {}, expected VBO or TLBO-ETL-<TV|AV>[-ALT<k>]".format(name))
        if self.variance_policy not in VARIANCE_POLICIES:
            raise XferBOConfigException("Unknown variance policy in {}, expected one of {}".format(
                name, VARIANCE_POLICIES))
        if self.alternation_interval is not None and self.alternation_interval < 1:
            raise XferBOConfigException("Alternation interval of {} must be positive".format(name))

    def __str__(self):
        return self.name

    def __repr__(self):
        return "MethodSpec({!r})".format(self.name)

    def __eq__(self, other):
        return isinstance(other, MethodSpec) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    @property
    def transfer(self):
        return self.mode == 'TLBO'


class ExperimentConfig:
    """
    Parses experiment files. Either a benchmark `case` or an `external` problem must be given, every other entry
    has a default.
    """
    def __init__(self, config_filename: str, adopt_auxiliaries=True, overrides=None):
        """
        Parses experiment files. JSON documents are valid YAML, so both formats are read, and YAML files may pull
        in other files with `!include`.

        Parameters
        ----------
        config_filename : str
                          Path to the experiment (or manifest) file.
        adopt_auxiliaries : bool
                            Keep any unrecognized top level entry as an attribute of this object (nested
                            mappings become `ExperimentAnnotations`). Defaults to True.
        overrides : dict, None
                    Entries replacing those of the file (e.g. from command line flags), None values are ignored.
                    The `XFERBO_SEED` environment variable overrides the seed last.
        """
        try:
            with open(config_filename, 'r') as fio:
                self._original_config = yaml.load(fio, Loader=yaml.FullLoader)
        except OSError as e:
            raise XferBOConfigException("Could not read {}: {}".format(config_filename, e))
        except yaml.YAMLError as e:
            raise XferBOConfigException("Could not parse {}: {}".format(config_filename, e))
        if not isinstance(self._original_config, dict):
            raise XferBOConfigException("{} does not hold a mapping of experiment entries.".format(config_filename))
        self._parse(dict(self._original_config), adopt_auxiliaries, overrides,
                    Path(config_filename).resolve().parent)

    @classmethod
    def from_dict(cls, config: dict, adopt_auxiliaries=True, overrides=None, relative_directory=None):
        """Same as loading a file holding `config`; relative paths refer to `relative_directory`."""
        obj = cls.__new__(cls)
        obj._original_config = dict(config)
        obj._parse(dict(config), adopt_auxiliaries, overrides,
                   Path.cwd() if relative_directory is None else Path(relative_directory))
        return obj

    def _parse(self, working_config: dict, adopt_auxiliaries, overrides, config_directory):
        working_config.update({k: v for k, v in (overrides or {}).items() if v is not None})
        if os.environ.get(SEED_VARIABLE):
            try:
                working_config['seed'] = int(os.environ[SEED_VARIABLE])
            except ValueError:
                raise XferBOConfigException("{} must be an integer, got {}".format(SEED_VARIABLE,
                                                                                   os.environ[SEED_VARIABLE]))

        def get_pop(key, default=None):
            working_config.setdefault(key, default)
            return working_config.pop(key)

        self.relative_directory = Path(get_pop('relative_directory', config_directory))
        self.case_name = get_pop('case')
        self.external = get_pop('external')
        if (self.case_name is None) == (self.external is None):
            raise XferBOConfigException("Exactly one of `case` or `external` must be given.")
        if self.external is not None:
            if not isinstance(self.external, dict):
                raise XferBOConfigException("`external` must be a mapping describing the problem.")
            self.case = external_case(self.external, self.relative_directory)
        else:
            self.case = get_case(self.case_name)

        methods = get_pop('methods', list(DEFAULT_METHODS))
        if isinstance(methods, str):
            methods = [methods]
        self.methods = [MethodSpec(m) for m in methods]
        if len(self.methods) == 0:
            raise XferBOConfigException("At least one method is needed.")
        if len(set(self.methods)) != len(self.methods):
            raise XferBOConfigException("Methods are listed more than once: {}".format(
                [m.name for m in self.methods]))

        def positive_int(key, value, minimum=1):
            try:
                value = int(value)
            except (TypeError, ValueError):
                raise XferBOConfigException("`{}` must be an integer, got {!r}".format(key, value))
            if value < minimum:
                raise XferBOConfigException("`{}` must be at least {}, got {}".format(key, minimum, value))
            return value

        self.runs = positive_int('runs', get_pop('runs', self.case.runs))
        self.iterations = positive_int('iterations', get_pop('iterations', self.case.iterations), minimum=0)
        self.seed = positive_int('seed', get_pop('seed', 0), minimum=0)
        self.output = str(get_pop('output', 'results'))
        self.jobs = positive_int('jobs', get_pop('jobs', 1))
        self.initial_doe_size = positive_int('initial_doe_size', get_pop('initial_doe_size',
                                                                         self.case.initial_doe_size))
        self.initial_sampling = get_pop('initial_sampling', self.case.initial_sampling)
        if self.initial_sampling not in SAMPLERS:
            raise XferBOConfigException("`initial_sampling` must be one of {}, got {}".format(list(SAMPLERS),
                                                                                           self.initial_sampling))
        self.source_doe_size = get_pop('source_doe_size')
        if self.source_doe_size is not None:
            self.source_doe_size = positive_int('source_doe_size', self.source_doe_size)
        if any(m.transfer for m in self.methods) and len(self.case.sources) == 0:
            tqdm.tqdm.write("{} has no sources, transfer methods will behave as VBO.".format(self.case.name))

        self.cost_per_eval = float(get_pop('cost_per_eval', 1.0))
        self.alternation_interval = get_pop('alternation_interval')
        self.freeze_probabilities_after = get_pop('freeze_probabilities_after')
        self.include_target = bool(get_pop('include_target', False))
        self.source_kernel = get_pop('source_kernel', 'auto')
        self.prediction_error_iteration = get_pop('prediction_error_iteration')
        self.prediction_error_points = get_pop('prediction_error_points', 100)

        # Sub-configurations are validated now, not in the middle of an experiment
        try:
            self.gp = GPConfig(**(get_pop('gp') or {}))
            self.acquisition = AcquisitionConfig(**(get_pop('acquisition') or {}))
            criteria = get_pop('criteria')
            constraint_criteria = get_pop('constraint_criteria')
            self.criteria = CriteriaConfig.from_dict(criteria, role='objective')
            self.constraint_criteria = CriteriaConfig.from_dict(
                criteria if constraint_criteria is None else constraint_criteria, role='constraint')
            for method in self.methods:
                self.optimizer_config(method, self.seed)
        except (TypeError, ValueError) as e:
            raise XferBOConfigException("Invalid option: {}".format(e))

        if adopt_auxiliaries and len(working_config) > 0:
            tqdm.tqdm.write("Keeping unrecognized experiment entries as annotations: {}".format(
                list(working_config.keys())))
            annotate(self, working_config)

    def __str__(self):
        return "Experiment | {} | methods: {} | runs: {} | iterations: {} | seed: {}".format(
            self.case.name, ', '.join(m.name for m in self.methods), self.runs, self.iterations, self.seed)

    def method(self, name) -> MethodSpec:
        name = MethodSpec(name) if not isinstance(name, MethodSpec) else name
        if name not in self.methods:
            raise XferBOConfigException("{} is not part of this experiment.".format(name))
        return name

    def optimizer_config(self, method: MethodSpec, seed, verbose=False) -> OptimizerConfig:
        """Options of one optimization run of `method`, seeded with `seed`."""
        alternation = None
        if method.transfer:
            alternation = method.alternation_interval if method.alternation_interval is not None else \
                self.alternation_interval
        return OptimizerConfig(max_iter=self.iterations, mode=method.mode, alternation_interval=alternation,
                               variance_policy=method.variance_policy, seed=seed, criteria=self.criteria,
                               constraint_criteria=self.constraint_criteria, acquisition=self.acquisition,
                               gp=self.gp, source_kernel=self.source_kernel, include_target=self.include_target,
                               freeze_probabilities_after=self.freeze_probabilities_after,
                               cost_per_eval=self.cost_per_eval,
                               prediction_error_iteration=self.prediction_error_iteration,
                               prediction_error_points=self.prediction_error_points, verbose=verbose)

    def as_dict(self):
        """
        Every resolved entry, suitable to write out as a manifest: loading it back reproduces the experiment.
        """
        d = dict(case=self.case_name) if self.external is None else \
            dict(external=self.external, relative_directory=str(self.relative_directory.resolve()))
        d.update(methods=[m.name for m in self.methods], runs=self.runs, iterations=self.iterations,
                 seed=self.seed, output=self.output, jobs=self.jobs, initial_doe_size=self.initial_doe_size,
                 initial_sampling=self.initial_sampling, source_doe_size=self.source_doe_size,
                 cost_per_eval=self.cost_per_eval, alternation_interval=self.alternation_interval,
                 freeze_probabilities_after=self.freeze_probabilities_after, include_target=self.include_target,
                 source_kernel=self.source_kernel, prediction_error_iteration=self.prediction_error_iteration,
                 prediction_error_points=self.prediction_error_points, gp=self.gp.as_dict(),
                 acquisition=self.acquisition.as_dict(), criteria=self.criteria.as_dict(),
                 constraint_criteria=self.constraint_criteria.as_dict())
        return d
