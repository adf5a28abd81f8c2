import argparse
import sys

import tqdm

from xferbo.benchmarks.cases import SUPPORTED_CASES
from xferbo.configuratron.config import ExperimentConfig
from xferbo.harness import run_experiment, summarize
from xferbo.utils import XferBOConfigException

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _parser():
    parser = argparse.ArgumentParser(prog='xferbo', description="Constrained Bayesian optimization experiments, "
                                                                "with and without transfer from source problems.")
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="Run an experiment (or re-run one from its manifest).")
    run.add_argument('--config', required=True, help="Experiment file (YAML or JSON).")
    run.add_argument('--jobs', type=int, default=None, help="Runs executed in parallel.")
    run.add_argument('--out', default=None, help="Output directory, overrides the `output` entry.")
    run.add_argument('--quiet', action='store_true', help="No progress output.")

    summary = commands.add_parser('summarize', help="Write summary CSVs from the histories of an output directory.")
    summary.add_argument('--in', dest='directory', required=True)

    commands.add_parser('list-cases', help="List the built-in benchmark cases.")
    return parser


def _run(args):
    try:
        config = ExperimentConfig(args.config, adopt_auxiliaries=True, overrides=dict(jobs=args.jobs,
                                                                                         output=args.out))
    except XferBOConfigException as e:
        tqdm.tqdm.write("Configuration error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(config, verbose=not args.quiet)
    except XferBOConfigException as e:
        tqdm.tqdm.write("Configuration error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        tqdm.tqdm.write("Experiment failed: {!r}".format(e), file=sys.stderr)
        return EXIT_FAILURE
    if summary.failures:
        tqdm.tqdm.write("{} run(s) failed, see the manifest.".format(len(summary.failures)), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _summarize(args):
    try:
        summary = summarize(args.directory, output=args.directory)
    except (FileNotFoundError, ValueError) as e:
        tqdm.tqdm.write("Nothing to summarize: {}".format(e), file=sys.stderr)
        return EXIT_FAILURE
    print(summary)
    return EXIT_OK


def _list_cases(args):
    for name, factory in SUPPORTED_CASES.items():
        case = factory()
        print("{}: {}".format(name, case.description))
        print("    target: {}".format(case.target))
        for source in case.sources:
            print("    source: {} ({} points)".format(source.name, source.doe_size))
        print("    reference: {}".format(case.reference))
    return EXIT_OK


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        # Usage errors are configuration errors
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    return {'run': _run, 'summarize': _summarize, 'list-cases': _list_cases}[args.command](args)


if __name__ == '__main__':
    sys.exit(main())
