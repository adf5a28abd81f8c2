import json
import time
import warnings

import tqdm.auto as tqdm

import numpy as np
import scipy

from collections import OrderedDict
from multiprocessing import Pool
from pathlib import Path
from pandas import DataFrame

from xferbo.configuratron.config import ExperimentConfig
from xferbo.optim.processes import RunHistory, optimizer_for
from xferbo.utils import TruncatedSummaryWarning, derive_seed, inclusive_quartiles

SUMMARY_COLUMNS = ('iter', 'mean', 'median', 'q1', 'q3', 'min', 'max', 'wall_time', 'runs')
MANIFEST_NAME = 'manifest.json'
HISTORY_DIRECTORY = 'histories'

# Seed purposes of the designs shared by every method of a run
_INITIAL_DOE = 0
_SOURCE_DOES = 1


def run_seed(seed, run):
    return derive_seed(seed, run)


def history_path(output, method, run):
    return Path(output) / HISTORY_DIRECTORY / str(method) / 'run_{:03d}.csv'.format(run)


def convergence_series(history: RunHistory):
    """Best feasible objective and time axis at the end of each iteration, iteration 0 being the initial DOE."""
    return history.to_frame().groupby('iter', sort=True)[['best_feasible', 'wall_time']].last().reset_index()


def convergence_frame(histories):
    """
    Order statistics across runs of the best feasible objective at every iteration. Quartiles use the inclusive
    median convention. Histories of different lengths are truncated to the shortest one.

    Returns
    -------
    frame : DataFrame
            Columns iter, mean, median, q1, q3, min, max, wall_time and runs. wall_time is the mean over runs of
            the synthetic cost axis of `RunHistory`, not measured seconds.
    """
    series = [convergence_series(h) for h in histories]
    if len(series) == 0:
        raise ValueError("Need at least one history to summarize.")
    lengths = [len(s) for s in series]
    shortest = min(lengths)
    if len(set(lengths)) > 1:
        warnings.warn("Histories cover between {} and {} iterations, truncating to {}.".format(
            shortest - 1, max(lengths) - 1, shortest - 1), TruncatedSummaryWarning)
    best = np.column_stack([s['best_feasible'].to_numpy(dtype=float)[:shortest] for s in series])
    wall_time = np.column_stack([s['wall_time'].to_numpy(dtype=float)[:shortest] for s in series])

    rows = list()
    for i, it in enumerate(series[0]['iter'].to_numpy()[:shortest]):
        q1, median, q3 = inclusive_quartiles(best[i])
        rows.append(OrderedDict(iter=int(it), mean=float(np.mean(best[i])), median=median, q1=q1, q3=q3,
                                min=float(np.min(best[i])), max=float(np.max(best[i])),
                                wall_time=float(np.mean(wall_time[i])), runs=best.shape[1]))
    return DataFrame(rows, columns=list(SUMMARY_COLUMNS))


class ConvergenceSummary(object):
    """
    Per method convergence statistics of the best feasible objective, ready to plot.
    """
    def __init__(self, frames, failures=None):
        self.frames = OrderedDict(frames)
        self.failures = list() if failures is None else list(failures)

    def __str__(self):
        lines = ["Convergence summary"]
        for method, frame in self.frames.items():
            last = frame.iloc[-1]
            lines.append("| {} | runs: {} | iterations: {} | median best: {:.6g} |".format(
                method, int(last['runs']), int(last['iter']), last['median']))
        return '\n'.join(lines)

    def __getitem__(self, method):
        return self.frames[str(method)]

    def __contains__(self, method):
        return str(method) in self.frames

    @property
    def methods(self):
        return list(self.frames.keys())

    def runs(self, method):
        return int(self.frames[str(method)]['runs'].iloc[0])

    def at_iteration(self, method, iteration):
        frame = self.frames[str(method)]
        return frame[frame['iter'] == iteration].iloc[0]

    def to_csv(self, directory):
        """Writes `summary_<method>.csv` per method, returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = list()
        for method, frame in self.frames.items():
            path = directory / 'summary_{}.csv'.format(method)
            frame.to_csv(path, index=False, float_format='%.17g')
            paths.append(path)
        return paths


def _histories_in(directory: Path):
    histories = OrderedDict()
    method_directories = sorted(p for p in (directory / HISTORY_DIRECTORY).glob('*') if p.is_dir()) \
        if (directory / HISTORY_DIRECTORY).is_dir() else list()
    if len(method_directories) == 0 and len(list(directory.glob('run_*.csv'))) > 0:
        method_directories = [directory]
    for method_directory in method_directories:
        files = sorted(method_directory.glob('run_*.csv'))
        if files:
            histories[method_directory.name] = files
    return histories


def summarize(histories, output=None):
    """
    Summarize run histories.

    Parameters
    ----------
    histories : str, Path, dict, list
                An experiment output directory (or a directory of `run_*.csv` files), a mapping from method name
                to histories, or a list of histories of a single method. Histories are `RunHistory` objects or
                paths to their CSV files.
    output : str, Path, None
             Where to write the `summary_<method>.csv` files, nothing is written when None.

    Returns
    -------
    summary : ConvergenceSummary
    """
    if isinstance(histories, (str, Path)):
        directory = Path(histories)
        if not directory.is_dir():
            raise FileNotFoundError("No directory {}".format(directory))
        histories = _histories_in(directory)
    elif not isinstance(histories, dict):
        histories = list(histories)
        method = getattr(histories[0], 'method', None) if histories else None
        if method is None and histories and not isinstance(histories[0], RunHistory):
            method = Path(histories[0]).parent.name
        histories = {method or 'run': histories}
    if len(histories) == 0 or any(len(h) == 0 for h in histories.values()):
        raise ValueError("Need at least one history per method to summarize.")

    frames = OrderedDict()
    for method, runs in histories.items():
        loaded = [h if isinstance(h, RunHistory) else RunHistory.from_csv(h, method=method) for h in runs]
        frames[str(method)] = convergence_frame(loaded)
    summary = ConvergenceSummary(frames)
    if output is not None:
        summary.to_csv(output)
    return summary


def _execute_run(config: ExperimentConfig, run, output, verbose=False):
    """
    Every method of one run, sequentially, from the same initial target DOE and source DOEs.
    """
    case = config.case
    seed = run_seed(config.seed, run)
    record = OrderedDict(run=run, seed=seed, methods=OrderedDict())
    try:
        initial = case.initial_doe(derive_seed(seed, _INITIAL_DOE), config.initial_doe_size,
                                   config.initial_sampling)
        sources = case.source_does(derive_seed(seed, _SOURCE_DOES), config.source_doe_size) \
            if any(m.transfer for m in config.methods) else list()
    except Exception as e:
        for method in config.methods:
            record['methods'][method.name] = dict(status='failed', error="Initial designs: {!r}".format(e))
        return record

    for method in config.methods:
        start = time.perf_counter()
        try:
            optimizer = optimizer_for(case.target, config.optimizer_config(method, seed), sources,
                                      case.source_names)
            history = optimizer.fit(initial)
        except Exception as e:
            record['methods'][method.name] = dict(status='failed', error=repr(e),
                                                  row=getattr(e, 'row', None), cause=getattr(e, 'cause', None))
            continue
        history.method = method.name
        path = history_path(output, method.name, run)
        path.parent.mkdir(parents=True, exist_ok=True)
        history.to_csv(path)
        history.to_json(path.with_suffix('.json'))
        best = history.best_feasible()
        record['methods'][method.name] = dict(status='ok', history=str(path.relative_to(output)),
                                              best=None if best is None else best[1],
                                              elapsed=time.perf_counter() - start)
        if verbose:
            tqdm.tqdm.write("Run {} | {} | best: {} |".format(run, method.name,
                                                             'none' if best is None else '{:.6g}'.format(best[1])))
    return record


def _pool_task(args):
    config_dict, relative_directory, run, output, verbose = args
    config = ExperimentConfig.from_dict(config_dict, adopt_auxiliaries=False, relative_directory=relative_directory)
    return _execute_run(config, run, Path(output), verbose)


def write_manifest(config: ExperimentConfig, output, records, started=None):
    """
    The resolved configuration, loadable as an experiment file, along with the seed and outcome of every run.
    """
    manifest = config.as_dict()
    manifest['output'] = str(output)
    manifest['manifest'] = OrderedDict(
        case=config.case.name, started=started, finished=time.strftime('%Y-%m-%dT%H:%M:%S'),
        versions=dict(numpy=np.__version__, scipy=scipy.__version__),
        run_records=list(records),
        failures=[dict(run=r['run'], method=m, **{k: v for k, v in outcome.items() if k != 'status'})
                  for r in records for m, outcome in r['methods'].items() if outcome['status'] != 'ok'])
    path = Path(output) / MANIFEST_NAME
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, default=_json_default)
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError("Cannot serialize {}".format(type(o)))


def run_experiment(config: ExperimentConfig, jobs=None, output=None, verbose=True):
    """
    Repeat the optimization of `config.case` for every method and run. Run r of every method starts from the same
    initial target DOE and the same source DOEs, all drawn from seeds derived from the base seed and r.

    Parameters
    ----------
    config : ExperimentConfig
    jobs : int, None
           Runs executed in parallel, defaults to `config.jobs`.
    output : str, Path, None
             Output directory, defaults to `config.output`.
    verbose : bool

    Returns
    -------
    summary : ConvergenceSummary
              Over the completed runs of each method. `summary.failures` lists the failed (run, method) pairs,
              which are also recorded in the manifest.
    """
    jobs = config.jobs if jobs is None else int(jobs)
    output = Path(config.output if output is None else output)
    output.mkdir(parents=True, exist_ok=True)
    started = time.strftime('%Y-%m-%dT%H:%M:%S')
    if verbose:
        tqdm.tqdm.write(str(config))

    if jobs > 1 and config.runs > 1:
        tasks = [(config.as_dict(), str(config.relative_directory), r, str(output), False)
                 for r in range(config.runs)]
        with Pool(min(jobs, config.runs)) as pool:
            records = list(tqdm.tqdm(pool.imap(_pool_task, tasks), total=config.runs, desc='Runs',
                                     disable=not verbose))
    else:
        records = [_execute_run(config, r, output, verbose) for r in
                   tqdm.trange(config.runs, desc='Runs', disable=not verbose)]

    write_manifest(config, output, records, started)

    completed = OrderedDict((m.name, [output / r['methods'][m.name]['history'] for r in records
                                      if r['methods'][m.name]['status'] == 'ok']) for m in config.methods)
    failures = [dict(run=r['run'], method=m, error=o.get('error')) for r in records
                for m, o in r['methods'].items() if o['status'] != 'ok']
    for method, files in completed.items():
        if len(files) < config.runs:
            warnings.warn("{} completed {} of {} runs, its summary covers the completed runs only.".format(
                method, len(files), config.runs), TruncatedSummaryWarning)

    summary = summarize(OrderedDict((m, f) for m, f in completed.items() if len(f) > 0)) \
        if any(len(f) > 0 for f in completed.values()) else ConvergenceSummary(OrderedDict())
    summary.failures = failures
    summary.to_csv(output)
    if verbose:
        tqdm.tqdm.write(str(summary))
    return summary
