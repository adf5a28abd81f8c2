import json
import shlex
import subprocess
import threading

import numpy as np

from collections import OrderedDict
from pathlib import Path

from xferbo.benchmarks.cases import BenchmarkCase, SourceGenerator, StaticSource
from xferbo.data.doe import Doe, VariableMeta, ConstraintMeta, ProblemSpec
from xferbo.utils import XferBOConfigException, XferBOBlackboxException


def _determine_path(path, relative_directory=None):
    if relative_directory is None or str(path)[0] in '/~':
        return Path(path).expanduser()
    return (Path(relative_directory) / path).expanduser()


class ExternalBlackbox:
    """
    Runs an external command once per evaluated point. The command receives one JSON line `{"x": [...]}` on its
    standard input and must answer with one JSON line `{"objective": f, "constraints": [...]}` on its standard
    output, constraint values in the declared order. If the command prints more than one line, the last non-empty
    one is the reply.

    The objective and constraint handles share a small cache of replies, so evaluating a point through a
    `ProblemSpec` runs the command once.
    """
    _CACHE_SIZE = 64

    def __init__(self, command, n_constraints=0, timeout=60.0, cwd=None):
        """
        Parameters
        ----------
        command : str, list
                  Executable and arguments. Strings are split the way a shell would.
        n_constraints : int
                        Number of constraint values each reply must carry.
        timeout : float, None
                  Seconds allowed per evaluation, None waits forever.
        cwd : str, Path, None
              Working directory of the command.
        """
        if isinstance(command, str):
            command = shlex.split(command)
        if command is None or len(command) == 0:
            raise XferBOConfigException("An external blackbox needs a command.")
        if timeout is not None and float(timeout) <= 0:
            raise XferBOConfigException("Timeout must be positive, got {}".format(timeout))
        self.command = [str(c) for c in command]
        self.n_constraints = int(n_constraints)
        self.timeout = None if timeout is None else float(timeout)
        self.cwd = None if cwd is None else str(cwd)
        self.calls = 0
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def __repr__(self):
        return "ExternalBlackbox({!r}, constraints={}, timeout={})".format(' '.join(self.command),
                                                                          self.n_constraints, self.timeout)

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        key = x.tobytes()
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        result = self._run(x)
        with self._lock:
            self._cache[key] = result
            while len(self._cache) > self._CACHE_SIZE:
                self._cache.popitem(last=False)
        return result

    def objective(self, x):
        return self(x)[0]

    def constraint(self, index):
        """Handle returning constraint `index` of the reply for x."""
        def handle(x):
            return self(x)[1][index]
        return handle

    def _run(self, x):
        request = json.dumps(dict(x=x.tolist())) + '\n'
        try:
            proc = subprocess.run(self.command, input=request, capture_output=True, text=True, timeout=self.timeout,
                                  cwd=self.cwd)
        except subprocess.TimeoutExpired:
            raise XferBOBlackboxException("{} gave no reply within {}s".format(self.command[0], self.timeout),
                                          cause='timeout')
        except OSError as e:
            raise XferBOBlackboxException("Could not start {}: {}".format(self.command[0], e), cause='launch')
        with self._lock:
            self.calls += 1
        if proc.returncode != 0:
            raise XferBOBlackboxException("{} exited with code {}: {}".format(
                self.command[0], proc.returncode, proc.stderr.strip()[-500:]), cause='exit {}'.format(proc.returncode))
        return self.parse_reply(proc.stdout)

    def parse_reply(self, stdout):
        """
        Returns
        -------
        objective : float
        constraints : list
        """
        lines = [line for line in str(stdout).splitlines() if line.strip()]
        if len(lines) == 0:
            raise XferBOBlackboxException("Empty reply from {}".format(self.command[0]), cause='malformed')
        try:
            reply = json.loads(lines[-1])
        except json.JSONDecodeError as e:
            raise XferBOBlackboxException("Reply is not JSON: {!r} ({})".format(lines[-1][:200], e),
                                          cause='malformed')
        if not isinstance(reply, dict) or 'objective' not in reply:
            raise XferBOBlackboxException("Reply lacks an objective: {!r}".format(reply), cause='malformed')
        constraints = reply.get('constraints', [] if self.n_constraints == 0 else None)
        if not isinstance(constraints, list) or len(constraints) != self.n_constraints:
            raise XferBOBlackboxException("Reply needs {} constraint values, got {!r}".format(self.n_constraints,
                                                                                            constraints),
                                          cause='malformed')
        try:
            return _number(reply['objective']), [_number(c) for c in constraints]
        except (TypeError, ValueError) as e:
            raise XferBOBlackboxException("Reply holds a non-numeric value: {}".format(e), cause='malformed')


def _number(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError("{!r} is not a number".format(value))
    return float(value)


def variables_from_config(entries):
    """`VariableMeta`s from `{name, lower, upper}` mappings or `[name, lower, upper]` triples."""
    if not isinstance(entries, list) or len(entries) == 0:
        raise XferBOConfigException("Variables must be a non-empty list, got {!r}".format(entries))
    variables = list()
    for entry in entries:
        try:
            if isinstance(entry, dict):
                variables.append(VariableMeta(entry['name'], entry['lower'], entry['upper']))
            else:
                name, lower, upper = entry
                variables.append(VariableMeta(name, lower, upper))
        except (KeyError, TypeError, ValueError) as e:
            raise XferBOConfigException("Bad variable entry {!r}: {}".format(entry, e))
    return variables


def constraints_from_config(entries):
    """`ConstraintMeta`s from `{name, category}` mappings or plain names (category 'other')."""
    constraints = list()
    for entry in entries or []:
        try:
            if isinstance(entry, dict):
                constraints.append(ConstraintMeta(entry['name'], entry.get('category', 'other')))
            else:
                constraints.append(ConstraintMeta(entry))
        except (KeyError, TypeError, ValueError) as e:
            raise XferBOConfigException("Bad constraint entry {!r}: {}".format(entry, e))
    return constraints


def external_blackbox(descriptor: dict, relative_directory=None) -> ProblemSpec:
    """
    Problem whose objective and constraints are computed by an external command.

    Parameters
    ----------
    descriptor : dict
                 `command` (required), `variables` (required), `constraints`, `timeout` (seconds, default 60),
                 `name`, `cwd`, and `reentrant` (default False. Set it when copies of the command may run for
                 several points at once).
    relative_directory : Path, None
                         Directory a relative `cwd` refers to, and the default working directory.

    Returns
    -------
    spec : ProblemSpec
    """
    descriptor = dict(descriptor)

    def get_pop(key, default=None):
        descriptor.setdefault(key, default)
        return descriptor.pop(key)

    command = get_pop('command')
    if command is None:
        raise XferBOConfigException("External problems need a `command`.")
    variables = variables_from_config(get_pop('variables'))
    constraints = constraints_from_config(get_pop('constraints'))
    timeout = get_pop('timeout', 60.0)
    name = get_pop('name', 'external')
    cwd = get_pop('cwd')
    cwd = relative_directory if cwd is None else _determine_path(cwd, relative_directory)
    reentrant = bool(get_pop('reentrant', False))
    if len(descriptor) > 0:
        raise XferBOConfigException("Unknown entries for external problem {}: {}".format(name, list(descriptor)))

    blackbox = ExternalBlackbox(command, len(constraints), timeout=timeout, cwd=cwd)
    return ProblemSpec(variables, blackbox.objective,
                       [(meta, blackbox.constraint(j)) for j, meta in enumerate(constraints)],
                       name=name, reentrant=reentrant)


def _source_from_config(entry: dict, index, relative_directory=None):
    entry = dict(entry)
    if 'csv' in entry:
        filename = _determine_path(entry.pop('csv'), relative_directory)
        variables = entry.pop('variables', None)
        constraints = entry.pop('constraints', None)
        name = entry.pop('name', filename.stem)
        if len(entry) > 0:
            raise XferBOConfigException("Unknown entries for source {}: {}".format(name, list(entry)))
        if not filename.exists():
            raise XferBOConfigException("Source DOE {} does not exist".format(filename))
        try:
            doe = Doe.from_csv(filename, variables=None if variables is None else variables_from_config(variables),
                               constraints=None if constraints is None else constraints_from_config(constraints))
        except ValueError as e:
            raise XferBOConfigException("Could not load source DOE {}: {}".format(filename, e))
        return StaticSource(doe, name)
    doe_size = entry.pop('doe_size', 50)
    sampling = entry.pop('sampling', 'lhs')
    entry.setdefault('name', 'source_{}'.format(index))
    return SourceGenerator(external_blackbox(entry, relative_directory), doe_size, sampling)


def external_case(descriptor: dict, relative_directory=None) -> BenchmarkCase:
    """
    A `BenchmarkCase` around an external target problem. Besides the `external_blackbox` entries, the descriptor
    may list `sources`: either external problems (with `doe_size` and `sampling`, evaluated anew for every seed) or
    `{csv: file, name, variables, constraints}` entries pointing at evaluated DOEs. `iterations`, `runs`,
    `initial_doe_size` and `initial_sampling` give the case defaults.
    """
    descriptor = dict(descriptor)
    sources = descriptor.pop('sources', None) or []
    protocol = dict(iterations=descriptor.pop('iterations', 20), runs=descriptor.pop('runs', 20),
                    initial_doe_size=descriptor.pop('initial_doe_size', None),
                    initial_sampling=descriptor.pop('initial_sampling', 'uniform'))
    target = external_blackbox(descriptor, relative_directory)
    if protocol['initial_doe_size'] is None:
        protocol['initial_doe_size'] = target.D
    return BenchmarkCase(target.name, target,
                         [_source_from_config(s, i, relative_directory) for i, s in enumerate(sources)],
                         description="External problem: {}".format(target), **protocol)
