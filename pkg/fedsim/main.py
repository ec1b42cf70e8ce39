"""Command-line entry point: ``fedsim partition|run|report|selftest``.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage or configuration error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import TypeAdapter, ValidationError

from fedsim import __version__
from fedsim.config.presets import EXPERIMENTS, experiment_config, with_overrides
from fedsim.config.run_config import ALGORITHMS, DatasetSpec, PartitionSpec, RunConfig, load_run_config
from fedsim.config.settings import settings
from fedsim.data.dataset import Partition, manifest_bytes
from fedsim.errors import ConfigError, FedSimError, PartitionError
from fedsim.services.metrics import MetricsWriter, write_run_manifest
from fedsim.services.report import format_table, parse_milestones, summarize
from fedsim.services.selftest import run_selftest
from fedsim.services.training import (
    TrainingService,
    load_dataset_splits,
    make_partition,
    prepare_experiment,
)

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, PartitionError, ValidationError)


def configure_logging() -> None:
    logging.basicConfig(level=settings.log_level, format=settings.log_format)


def parse_dataset_spec(text: str):
    """A dataset spec given inline as JSON or as the path of a JSON file."""
    if not text.lstrip().startswith("{"):
        path = Path(text)
        if not path.is_file():
            raise ConfigError(f"dataset spec file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        return TypeAdapter(DatasetSpec).validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid dataset spec: {e}") from e


def size_histogram(partition: Partition, width: int = 40) -> str:
    sizes = partition.sizes()
    largest = max(sizes)
    lines = [f"client {client:>4} {size:>7} {'#' * max(1, round(width * size / largest))}"
             for client, size in enumerate(sizes)]
    lines.append(f"total {partition.total_examples} examples over {len(partition)} clients")
    return "\n".join(lines)


def cmd_partition(args: argparse.Namespace) -> int:
    spec = PartitionSpec(scheme=args.scheme, k=args.k, classes_per_client=args.classes_per_client)
    train, _ = load_dataset_splits(parse_dataset_spec(args.dataset))
    partition = make_partition(train, spec, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(manifest_bytes(partition.manifest()))
    logger.info(f"Wrote partition manifest to {out}")
    print(size_histogram(partition))
    return 0


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """The --config file or --preset, with --algorithm and --training-seed applied on top."""
    overrides = {}
    if args.algorithm is not None:
        overrides["algorithm"] = args.algorithm
    if args.training_seed is not None:
        overrides["seeds"] = {"training": args.training_seed}
    if args.preset is not None:
        return experiment_config(args.preset, **overrides)
    config = load_run_config(args.config)
    return with_overrides(config, **overrides) if overrides else config


def cmd_run(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    experiment = prepare_experiment(config)
    out = Path(args.out)
    with MetricsWriter(out) as writer:
        write_run_manifest(out, config.model_dump(mode="json"), experiment.partition_hash, __version__)
        TrainingService(experiment, args.threads, args.wall_time, on_record=writer.write).run()
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    summaries = [summarize(path, args.milestones, args.window, args.final_window) for path in args.metrics]
    print(format_table(summaries, args.milestones))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = run_selftest(args.seed, report=lambda result: print(result.line(), flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _milestones(text: str) -> List[float]:
    try:
        return parse_milestones(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    partition = commands.add_parser("partition", help="partition a dataset and write its manifest")
    partition.add_argument("--dataset", required=True, help="dataset spec as inline JSON or a JSON file")
    partition.add_argument("--k", type=int, required=True, help="number of clients")
    partition.add_argument("--scheme", choices=("iid", "label-skew"), default="iid")
    partition.add_argument("--classes-per-client", type=int, default=None)
    partition.add_argument("--seed", type=int, default=0)
    partition.add_argument("--out", required=True, help="manifest JSON path")
    partition.set_defaults(handler=cmd_partition)

    run = commands.add_parser("run", help="train one configuration and stream metrics")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="run configuration JSON")
    source.add_argument("--preset", choices=sorted(EXPERIMENTS), help="named experiment configuration")
    run.add_argument("--algorithm", choices=ALGORITHMS, default=None, help="replace the configured algorithm")
    run.add_argument("--training-seed", type=int, default=None, help="replace seeds.training")
    run.add_argument("--out", default=str(Path(settings.output_dir) / "metrics.csv"), help="metrics CSV path")
    run.add_argument("--threads", type=int, default=settings.threads)
    run.add_argument("--wall-time", action="store_true", default=settings.record_wall_time,
                     help="record wall-clock milliseconds per round instead of 0")
    run.set_defaults(handler=cmd_run)

    report = commands.add_parser("report", help="rounds-to-milestone table for metrics CSVs")
    report.add_argument("--metrics", nargs="+", required=True)
    report.add_argument("--milestones", type=_milestones, default=[0.70, 0.80, 0.90])
    report.add_argument("--window", type=int, default=settings.milestone_window,
                        help="trailing-mean window for milestone detection")
    report.add_argument("--final-window", type=int, default=settings.final_window,
                        help="evaluation rounds averaged into the final accuracy")
    report.set_defaults(handler=cmd_report)

    selftest = commands.add_parser("selftest", help="run the embedded derivative and aggregation oracles")
    selftest.add_argument("--seed", type=int, default=settings.selftest_seed)
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    configure_logging()
    try:
        return args.handler(args)
    except USAGE_ERRORS as e:
        logger.error(f"Error in {args.command}: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FedSimError, OSError) as e:
        logger.error(f"Error in {args.command}: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
