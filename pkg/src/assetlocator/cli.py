"""
AssetLocator command-line interface.

Every subcommand reads one YAML config (`--config`, default
`assetlocator.yaml`) and acts on the datasets it lists, or on the subset
named with repeated `--dataset` flags. Stages map one-to-one onto the
pipeline so each can be rerun and inspected on its own:

    ingest -> slice -> detect -> locate -> report

`run-all` chains them. `synth` writes synthetic scenes (track, scene and
ground truth) for datasets that carry a `synthetic` block, or runs the
Monte-Carlo accuracy experiment with `--monte-carlo N`.

Exit codes: 0 success, 1 input or configuration error, 2 when some slices
could not be analysed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, List, Optional

from .cluster import ClusterParams
from .configuration import AppConfig, ConfigError, load_config
from .pipeline import (
    PipelineError,
    RunOptions,
    detect_dataset,
    ingest_dataset,
    locate_dataset,
    run_dataset,
    slice_dataset,
    write_reports,
)
from .reports import aggregate_by_area, format_area_table, format_summary_table
from .storage import StorageError
from .synth import (
    InvalidSpec,
    SceneSpec,
    generate,
    run_accuracy_experiment,
    split_object_count,
    write_scene,
)
from .track import TrackError

DEFAULT_CONFIG = "assetlocator.yaml"
LOG_FORMAT = "ts=%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_PARTIAL = 2

INPUT_ERRORS = (ConfigError, TrackError, PipelineError, StorageError, InvalidSpec)

logger = logging.getLogger(__name__)


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _load(args: argparse.Namespace) -> AppConfig:
    return load_config(Path(args.config))


def _options(args: argparse.Namespace, config: AppConfig) -> RunOptions:
    cluster: Optional[ClusterParams] = None
    eps = getattr(args, "eps", None)
    min_pts = getattr(args, "min_pts", None)
    if eps is not None or min_pts is not None:
        try:
            cluster = replace(
                config.cluster,
                eps=config.cluster.eps if eps is None else eps,
                min_pts=config.cluster.min_pts if min_pts is None else min_pts,
            )
        except ValueError as exc:
            raise ConfigError(str(exc), key="cluster") from exc
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("must be at least 1", key="--jobs")
    min_confidence = getattr(args, "min_confidence", None)
    if min_confidence is not None and not 0.0 <= min_confidence <= 1.0:
        raise ConfigError("must be between 0 and 1", key="--min-confidence")
    return RunOptions(
        jobs=args.jobs,
        min_confidence=min_confidence,
        all_cardinals=getattr(args, "all_cardinals", False),
        cluster=cluster,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    """`assetlocator ingest`: normalise each track into output/captures.csv."""
    config = _load(args)
    for dataset in config.select(args.dataset):
        captures = ingest_dataset(config, dataset)
        print(f"{dataset.id}: {len(captures)} captures")
    return EXIT_OK


def cmd_slice(args: argparse.Namespace) -> int:
    """`assetlocator slice`: write the cardinal JPEGs for every capture."""
    config = _load(args)
    options = _options(args, config)
    for dataset in config.select(args.dataset):
        written = slice_dataset(config, dataset, options)
        print(f"{dataset.id}: {written} cardinal images")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    """`assetlocator detect`: run the detector and store bearing observations."""
    config = _load(args)
    options = _options(args, config)
    status = EXIT_OK
    for dataset in config.select(args.dataset):
        records, stats = detect_dataset(config, dataset, options)
        print(
            f"{dataset.id}: {len(records)} detections from "
            f"{stats.cardinals_analyzed} analysed slices"
        )
        if stats.failed_slices:
            print(
                f"{dataset.id}: {stats.failed_slices} slice(s) could not be analysed",
                file=sys.stderr,
            )
            status = EXIT_PARTIAL
    return status


def cmd_locate(args: argparse.Namespace) -> int:
    """`assetlocator locate`: cluster stored observations into object features."""
    config = _load(args)
    options = _options(args, config)
    summaries = []
    status = EXIT_OK
    for dataset in config.select(args.dataset):
        run = locate_dataset(config, dataset, options)
        summaries.append(run.summary)
        if run.partial:
            status = EXIT_PARTIAL
    print(format_summary_table(summaries), end="")
    return status


def cmd_report(args: argparse.Namespace) -> int:
    """`assetlocator report`: area, dataset and accuracy tables across datasets."""
    config = _load(args)
    report_dir = write_reports(config, config.select(args.dataset))
    print((report_dir / "areas.txt").read_text(encoding="utf-8"), end="")
    print((report_dir / "accuracy.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_run_all(args: argparse.Namespace) -> int:
    """`assetlocator run-all`: ingest, detect and locate, then write reports."""
    config = _load(args)
    options = _options(args, config)
    datasets = config.select(args.dataset)
    summaries = []
    status = EXIT_OK
    for dataset in datasets:
        run = run_dataset(config, dataset.id, options)
        summaries.append(run.summary)
        if run.partial:
            print(
                f"{dataset.id}: {run.summary.failed_slices} slice(s) could not be analysed",
                file=sys.stderr,
            )
            status = EXIT_PARTIAL
    write_reports(config, datasets)
    print(format_summary_table(summaries), end="")
    print(format_area_table(aggregate_by_area(summaries)), end="")
    return status


def _monte_carlo(args: argparse.Namespace, config: AppConfig) -> int:
    result = run_accuracy_experiment(
        args.monte_carlo,
        seed=args.seed if args.seed is not None else 0,
        imaging=config.imaging,
    )
    print(f"objects        {len(result.estimates)} located, {result.failed} failed")
    print(f"mean sigma_lat {result.mean_sigma_lat * 1e4:.4f} x10^-4 deg")
    print(f"mean sigma_lon {result.mean_sigma_lon * 1e4:.4f} x10^-4 deg")
    print(f"mean error     {result.mean_error_ft:.3f} ft")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """`assetlocator synth`: write synthetic scenes, or run the accuracy experiment."""
    config = _load(args)
    if args.monte_carlo is not None:
        return _monte_carlo(args, config)
    if args.dataset:
        datasets = config.select(args.dataset)
    else:
        datasets = [d for d in config.datasets if d.synthetic is not None]
    if not datasets:
        print("No synthetic datasets configured; add a `synthetic` block.", file=sys.stderr)
        return EXIT_INPUT_ERROR
    for dataset in datasets:
        spec = SceneSpec.from_mapping(dataset.synthetic)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        if args.objects is not None:
            spec = replace(spec, objects=split_object_count(args.objects))
        scene = generate(
            spec,
            dataset_id=dataset.id,
            imaging=config.imaging,
            sensor=config.sensor,
            object_widths=config.object_widths,
            max_range=config.cluster.max_detection_range,
        )
        paths = config.paths_for(dataset)
        write_scene(scene, paths)
        print(
            f"{dataset.id}: {len(scene.track)} captures, {len(scene.objects)} objects "
            f"-> {paths.dataset_dir}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--config", default=DEFAULT_CONFIG, help=f"YAML config file (default {DEFAULT_CONFIG})."
    )
    parent.add_argument(
        "--dataset",
        action="append",
        help="Dataset id to process; repeat for several. Defaults to every configured dataset.",
    )
    parent.add_argument("--jobs", type=int, help="Worker threads per dataset.")
    parent.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG."
    )
    return parent


def _detect_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--min-confidence", type=float, help="Drop detections below this score.")
    parent.add_argument(
        "--all-cardinals",
        action="store_true",
        help="Analyse all eight cardinal slices instead of the forward-right one.",
    )
    return parent


def _cluster_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--eps", type=float, help="DBSCAN neighbourhood radius in feet.")
    parent.add_argument("--min-pts", type=int, help="DBSCAN core-point threshold.")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assetlocator", description="Locate street-side assets from 360° photospheres"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_parent()
    detect = _detect_parent()
    cluster = _cluster_parent()

    ingest = subparsers.add_parser(
        "ingest", parents=[common], help="Normalise GNSS tracks into capture tables"
    )
    ingest.set_defaults(func=cmd_ingest)

    slice_parser = subparsers.add_parser(
        "slice", parents=[common], help="Crop photospheres and write cardinal slices"
    )
    slice_parser.set_defaults(func=cmd_slice)

    detect_parser = subparsers.add_parser(
        "detect", parents=[common, detect], help="Detect objects and record bearings"
    )
    detect_parser.set_defaults(func=cmd_detect)

    locate = subparsers.add_parser(
        "locate", parents=[common, cluster], help="Cluster bearings and triangulate objects"
    )
    locate.set_defaults(func=cmd_locate)

    report = subparsers.add_parser(
        "report", parents=[common], help="Write cross-dataset area and accuracy reports"
    )
    report.set_defaults(func=cmd_report)

    run_all = subparsers.add_parser(
        "run-all", parents=[common, detect, cluster], help="Run every stage end to end"
    )
    run_all.set_defaults(func=cmd_run_all)

    synth = subparsers.add_parser(
        "synth", parents=[common], help="Generate synthetic scenes or run accuracy experiments"
    )
    synth.add_argument("--seed", type=int, help="Override the scene seed.")
    synth.add_argument(
        "--objects",
        type=int,
        help="Plant N objects (two stop signs per hydrant) instead of the configured mix.",
    )
    synth.add_argument(
        "--monte-carlo",
        type=int,
        metavar="N",
        help="Run the noisy-bearing accuracy experiment over N objects and print the result.",
    )
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        return handler(args)
    except INPUT_ERRORS as exc:
        logger.debug("command=%s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
