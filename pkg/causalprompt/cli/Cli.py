import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from causalprompt.blocks.linguistics.Features import list_features
from causalprompt.cli.Pipeline import STAGE_NAMES, ate_from_artifacts, discovered_stats, run_pipeline, stage_outputs
from causalprompt.utils.Config import PipelineConfig, load_config
from causalprompt.utils.Errors import DataError, StageError
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so main() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


# subcommand -> (flag, config key, type) overrides
STAGE_FLAGS = {
    "metrics": [("--timeout-s", "metrics.timeout_s", float), ("--memory-mb", "metrics.memory_mb", int),
                ("--interpreter", "metrics.interpreter", str), ("--codebleu-weights", "metrics.codebleu_weights", str),
                ("--workers", "metrics.workers", int)],
    "discover": [("--lambda-l1", "discovery.lambda_l1", float), ("--edge-threshold", "discovery.edge_threshold", float),
                 ("--max-outer-iters", "discovery.max_outer_iters", int), ("--tolerance", "discovery.tolerance", float),
                 ("--rho-max", "discovery.rho_max", float), ("--correlation-alpha", "correlation_alpha", float)],
    "analyze": [("--meta-vars", "meta_vars", str), ("--top-metrics", "analysis.top_metrics", int),
                ("--top-features", "analysis.top_features", int), ("--nuisance", "dml.nuisance", str),
                ("--folds", "dml.folds", int)],
    "optimize": [("--objective", "objective", str), ("--population", "ga.population", int),
                 ("--generations", "ga.generations", int), ("--survivors", "ga.survivors", int),
                 ("--mutation-rate", "ga.mutation_rate", float)],
    "verify": [("--test-fraction", "analysis.test_fraction", float), ("--predictor", "analysis.predictor", str)],
    "rephrase": [("--combos-per-question", "combos_per_question", int),
                 ("--temperature", "llm.rephrase_temperature", float)],
    "generate": [("--n-solutions", "llm.n_solutions", int)],
    "features": [("--features", "features", str)],
    "ingest": [],
    "ate": [("--nuisance", "dml.nuisance", str), ("--folds", "dml.folds", int)],
}


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key, e.g. discovery.lambda_l1=0.05")
    parser.add_argument("--output-dir", help="directory for every artifact")
    parser.add_argument("--dataset", help="input dataset (JSONL or CSV)")
    parser.add_argument("--seed", type=int, help="root seed for every stochastic stage")
    parser.add_argument("--mock-llm", action="store_true", help="use the deterministic offline model")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="causalprompt",
                            description="Causal analysis of code-generation prompts.")
    commands = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    commands.required = True

    for name in list(STAGE_FLAGS) + ["pipeline"]:
        sub = commands.add_parser(name)
        _common(sub)
        for flag, _, kind in STAGE_FLAGS.get(name, []):
            sub.add_argument(flag, type=kind)
        if name == "features":
            sub.add_argument("--list", action="store_true", help="print the feature registry and exit")
        if name == "ate":
            sub.add_argument("--treatment", required=True)
            sub.add_argument("--outcome", required=True)
            sub.add_argument("--x1", type=float, default=1.0)
            sub.add_argument("--x0", type=float, default=0.0)
        if name == "pipeline":
            sub.add_argument("--stages", help="comma-separated subset of " + ",".join(STAGE_NAMES))
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got '{item}'")
        overrides[key.strip()] = value
    for flag, key, _ in STAGE_FLAGS.get(args.command, []):
        value = getattr(args, flag.lstrip("-").replace("-", "_"), None)
        if value is not None:
            overrides[key] = str(value)
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.dataset:
        overrides["dataset"] = args.dataset
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.mock_llm:
        overrides["llm.mock"] = "true"
    return overrides


def _stages(args: argparse.Namespace) -> List[str]:
    if args.command != "pipeline":
        return [args.command]
    if not args.stages:
        return list(STAGE_NAMES)
    return [s.strip() for s in args.stages.split(",") if s.strip()]


def _dispatch(args: argparse.Namespace, config: PipelineConfig):
    if args.command == "features" and args.list:
        for name, family, description in list_features():
            print(f"{name}\t{family}\t{description}")
        return
    if args.command == "ate":
        print(json.dumps(ate_from_artifacts(config, args.treatment, args.outcome, args.x1, args.x0),
                         indent=2, sort_keys=True))
        return

    stages = _stages(args)
    run_pipeline(config, stages)
    if "discover" in stages:
        for key, value in discovered_stats(config).items():
            print(f"{key}\t{value}")
    for name in stage_outputs(stages):
        path = Path(config.output_dir) / name
        if path.exists():
            print(f"wrote {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args.config, _overrides(args))
        _dispatch(args, config)
    except UsageError as error:
        parser.print_usage(sys.stderr)
        print(f"causalprompt: error: {error}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, IOError) as error:
        logger.error(str(error))
        return EXIT_DATA
    except StageError as error:
        logger.error(str(error))
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
