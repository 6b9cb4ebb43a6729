"""
Dataset orchestration: ingestion, slicing, detection, location, reporting.

Each stage reads and writes files under `datasets/<id>/` so it can be run
on its own from the CLI:

    ingest  -> output/captures.csv
    slice   -> cardinals/*.jpg
    detect  -> sidecars/*.json, output/observations.csv, output/detect.json
    locate  -> output/estimates.json, features.geojson, summary.*, accuracy.*

Per-capture work runs in a thread pool; results are gathered in capture
order so every output is byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .cluster import ClusteringResult, ClusterParams, cluster_observations
from .configuration import AppConfig, ConfigError, DatasetConfig
from .detectors import (
    Detector,
    DetectorError,
    HttpDetector,
    MockDetector,
    bbox_to_bearing,
    detect_with_retry,
    estimate_range,
)
from .geodesy import camera_origin
from .imaging import (
    CardinalSlice,
    DimensionMismatch,
    crop_functional,
    load_photosphere,
    placeholder_photosphere,
    slice_cardinals,
)
from .models import BearingObservation, CompassBearing, Detection, PhotoCapture, ProjectedPoint
from .reports import (
    AccuracyRow,
    DatasetSummary,
    aggregate_by_area,
    emit_accuracy_report,
    estimate_from_dict,
    estimate_to_dict,
    expected_cardinals,
    feature_collection,
    format_accuracy_table,
    format_area_table,
    format_summary_table,
    nominal_miles,
    write_accuracy_csv,
    write_summary_csv,
)
from .storage import (
    DatasetPaths,
    StorageError,
    read_json,
    write_cardinal_image,
    write_json,
    write_metadata_sidecar,
    write_text,
)
from .track import (
    ingest_track,
    measured_miles,
    read_captures_csv,
    write_captures_csv,
)

logger = logging.getLogger(__name__)

KEPT = "kept"
OUT_OF_RANGE = "out_of_range"

CAPTURES_FILE = "captures.csv"
OBSERVATIONS_FILE = "observations.csv"
DETECT_STATS_FILE = "detect.json"
ESTIMATES_FILE = "estimates.json"
FEATURES_FILE = "features.geojson"

OBSERVATION_COLUMNS = (
    "capture_ref",
    "sequence_index",
    "cardinal_index",
    "object_class",
    "confidence",
    "easting",
    "northing",
    "bearing",
    "altitude",
    "directional_code",
    "estimated_range",
    "status",
)


class PipelineError(RuntimeError):
    """A dataset could not be processed at all."""


@dataclass(frozen=True)
class RunOptions:
    """Per-invocation overrides layered over the configuration."""

    jobs: Optional[int] = None
    min_confidence: Optional[float] = None
    all_cardinals: bool = False
    cluster: Optional[ClusterParams] = None


@dataclass(frozen=True)
class ObservationRecord:
    """One detection turned into a ray, with its range-gate verdict."""

    observation: BearingObservation
    cardinal_index: int
    estimated_range: float
    status: str = KEPT


@dataclass
class CaptureResult:
    capture: PhotoCapture
    records: List[ObservationRecord] = field(default_factory=list)
    cardinals: int = 0
    analyzed: int = 0
    failed: int = 0


@dataclass
class DetectionStats:
    photospheres: int = 0
    cardinals: int = 0
    cardinals_analyzed: int = 0
    failed_slices: int = 0

    def to_dict(self) -> Dict[str, int]:
        return {
            "photospheres": self.photospheres,
            "cardinals": self.cardinals,
            "cardinals_analyzed": self.cardinals_analyzed,
            "failed_slices": self.failed_slices,
        }


@dataclass
class DatasetRun:
    dataset_id: str
    features: Dict[str, Any]
    summary: DatasetSummary
    accuracy: List[AccuracyRow]
    clustering: ClusteringResult

    @property
    def partial(self) -> bool:
        return self.summary.failed_slices > 0


@dataclass
class _Context:
    config: AppConfig
    dataset: DatasetConfig
    paths: DatasetPaths
    detector: Optional[Detector]
    min_confidence: float
    all_cardinals: bool


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def ingest_dataset(config: AppConfig, dataset: DatasetConfig) -> List[PhotoCapture]:
    """Parse the track and persist the normalised capture table."""
    paths = config.paths_for(dataset)
    if not paths.track_path.exists():
        raise PipelineError(f"{dataset.id}: track file not found: {paths.track_path}")
    captures = ingest_track(
        paths.track_path,
        dataset.id,
        config.column_map(dataset),
        dataset.longitude_convention,
        dataset.delimiter,
    )
    buffer = io.StringIO()
    write_captures_csv(captures, buffer)
    write_text(paths.output(CAPTURES_FILE), buffer.getvalue())
    return captures


def load_captures(config: AppConfig, dataset: DatasetConfig) -> List[PhotoCapture]:
    """Normalised captures, ingesting the track first when needed."""
    path = config.paths_for(dataset).output(CAPTURES_FILE)
    if path.exists():
        return read_captures_csv(path)
    return ingest_dataset(config, dataset)


# ---------------------------------------------------------------------------
# Slicing and detection
# ---------------------------------------------------------------------------


def build_detector(config: AppConfig, paths: DatasetPaths) -> Detector:
    settings = config.detector
    if settings.backend == "mock":
        if not paths.ground_truth_path.exists():
            raise ConfigError(
                f"mock detector needs {paths.ground_truth_path}", key="detector.backend"
            )
        return MockDetector.from_path(paths.ground_truth_path)
    assert settings.endpoint is not None
    try:
        return HttpDetector(
            settings.endpoint,
            api_key=settings.api_key,
            api_key_header=settings.api_key_header,
            mapper=settings.mapper,
            timeout=settings.timeout,
            max_in_flight=settings.max_in_flight,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), key="detector") from exc


def _slices_for(ctx: _Context, capture: PhotoCapture) -> List[CardinalSlice]:
    cfg = ctx.config.imaging
    image_id = capture.image_ref
    if ctx.dataset.placeholder_rasters:
        photosphere = placeholder_photosphere(cfg, image_id, capture.capture_id)
    else:
        source = ctx.paths.photosphere_path(image_id)
        if source is None:
            raise StorageError(
                "photosphere not found", path=ctx.paths.photospheres_dir / f"{image_id}.jpg"
            )
        photosphere = load_photosphere(source, image_id, capture.capture_id)
    band = crop_functional(photosphere, cfg)
    return slice_cardinals(band, capture.heading, cfg, image_id, capture.capture_id)


def _within_range(ctx: _Context, detection: Detection) -> tuple[bool, float]:
    """Range-gate verdict; boxes clipped by the slice edge carry no usable width."""
    distance = estimate_range(
        detection, ctx.config.imaging, ctx.config.object_width(detection.object_class)
    )
    clipped = detection.bbox[0] <= 0 or detection.bbox[2] >= detection.slice_size
    return clipped or distance <= ctx.config.cluster.max_detection_range, distance


def _observe(
    ctx: _Context, capture: PhotoCapture, cardinal: CardinalSlice, detection: Detection
) -> ObservationRecord:
    bearing = bbox_to_bearing(detection, cardinal, capture.heading, ctx.config.imaging)
    in_range, distance = _within_range(ctx, detection)
    observation = BearingObservation(
        origin=camera_origin(capture.projected, capture.heading, ctx.config.sensor),
        bearing=bearing,
        capture_ref=capture.capture_id,
        object_class=detection.object_class,
        confidence=detection.confidence,
        sequence_index=capture.sequence_index,
        altitude=capture.position.altitude,
        directional_code=cardinal.directional_class.id,
    )
    if not in_range:
        logger.info(
            "capture=%s cardinal=%d class=%s discarded range_ft=%.1f",
            capture.capture_id,
            cardinal.cardinal_index,
            detection.object_class,
            distance,
        )
    return ObservationRecord(
        observation=observation,
        cardinal_index=cardinal.cardinal_index,
        estimated_range=distance,
        status=KEPT if in_range else OUT_OF_RANGE,
    )


def process_capture(ctx: _Context, capture: PhotoCapture) -> CaptureResult:
    """Crop, slice and store one photosphere; detect when a detector is set."""
    result = CaptureResult(capture=capture)
    wanted = 1 if not ctx.all_cardinals else ctx.config.imaging.cardinal_count
    try:
        slices = _slices_for(ctx, capture)
    except (DimensionMismatch, OSError) as exc:
        logger.error("capture=%s skipped error=%r", capture.capture_id, str(exc))
        if ctx.detector is not None:
            result.failed = wanted
        return result

    for cardinal in slices:
        try:
            write_cardinal_image(cardinal, ctx.paths.cardinals_dir)
        except StorageError as exc:
            _slice_write_failed(result, capture, cardinal, exc)
            continue
        result.cardinals += 1
        if ctx.detector is None:
            continue
        detections: Sequence[Detection] = ()
        detector_failed = False
        if cardinal.cardinal_index <= wanted:
            result.analyzed += 1
            try:
                settings = ctx.config.detector
                response = detect_with_retry(
                    ctx.detector,
                    cardinal,
                    ctx.min_confidence,
                    attempts=settings.attempts,
                    backoff_seconds=settings.backoff_seconds,
                )
            except DetectorError as exc:
                result.failed += 1
                detector_failed = True
                logger.error(
                    "capture=%s cardinal=%d detector_error=%s detail=%r",
                    capture.capture_id,
                    cardinal.cardinal_index,
                    type(exc).__name__,
                    str(exc),
                )
            else:
                detections = response.detections
        try:
            write_metadata_sidecar(capture, cardinal, detections, ctx.paths.sidecars_dir)
        except StorageError as exc:
            if not detector_failed:
                _slice_write_failed(result, capture, cardinal, exc)
            continue
        result.records.extend(_observe(ctx, capture, cardinal, d) for d in detections)
    return result


def _slice_write_failed(
    result: CaptureResult, capture: PhotoCapture, cardinal: CardinalSlice, exc: StorageError
) -> None:
    # The slice contributes no observations once any of its files is missing.
    result.failed += 1
    logger.error(
        "capture=%s cardinal=%d storage_error=%r",
        capture.capture_id,
        cardinal.cardinal_index,
        str(exc),
    )


def _run_captures(
    ctx: _Context, captures: Sequence[PhotoCapture], jobs: int
) -> List[CaptureResult]:
    ctx.paths.ensure()
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda capture: process_capture(ctx, capture), captures))


def _context(
    config: AppConfig, dataset: DatasetConfig, options: RunOptions, with_detector: bool
) -> _Context:
    paths = config.paths_for(dataset)
    return _Context(
        config=config,
        dataset=dataset,
        paths=paths,
        detector=build_detector(config, paths) if with_detector else None,
        min_confidence=(
            options.min_confidence
            if options.min_confidence is not None
            else config.detector.min_confidence
        ),
        all_cardinals=(
            options.all_cardinals or config.detector.all_cardinals or dataset.all_cardinals
        ),
    )


def slice_dataset(
    config: AppConfig, dataset: DatasetConfig, options: RunOptions = RunOptions()
) -> int:
    """Write every cardinal JPEG; returns the number of slices written."""
    captures = load_captures(config, dataset)
    ctx = _context(config, dataset, options, with_detector=False)
    results = _run_captures(ctx, captures, options.jobs or config.jobs)
    return sum(r.cardinals for r in results)


def detect_dataset(
    config: AppConfig, dataset: DatasetConfig, options: RunOptions = RunOptions()
) -> tuple[List[ObservationRecord], DetectionStats]:
    """Slice, detect and persist observations for one dataset."""
    captures = load_captures(config, dataset)
    ctx = _context(config, dataset, options, with_detector=True)
    results = _run_captures(ctx, captures, options.jobs or config.jobs)
    records = [record for result in results for record in result.records]
    stats = DetectionStats(
        photospheres=len(captures),
        cardinals=sum(r.cardinals for r in results),
        cardinals_analyzed=sum(r.analyzed for r in results),
        failed_slices=sum(r.failed for r in results),
    )
    buffer = io.StringIO()
    write_observations_csv(records, buffer)
    write_text(ctx.paths.output(OBSERVATIONS_FILE), buffer.getvalue())
    write_json(ctx.paths.output(DETECT_STATS_FILE), stats.to_dict())
    logger.info(
        "dataset=%s photospheres=%d cardinals=%d analyzed=%d failed=%d detections=%d",
        dataset.id,
        stats.photospheres,
        stats.cardinals,
        stats.cardinals_analyzed,
        stats.failed_slices,
        len(records),
    )
    return records, stats


# ---------------------------------------------------------------------------
# Observation table
# ---------------------------------------------------------------------------


def write_observations_csv(records: Sequence[ObservationRecord], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(OBSERVATION_COLUMNS)
    for record in records:
        obs = record.observation
        writer.writerow(
            [
                obs.capture_ref,
                obs.sequence_index,
                record.cardinal_index,
                obs.object_class,
                repr(obs.confidence),
                repr(obs.origin.easting),
                repr(obs.origin.northing),
                repr(obs.bearing.degrees),
                "" if obs.altitude is None else repr(float(obs.altitude)),
                obs.directional_code,
                repr(record.estimated_range),
                record.status,
            ]
        )


def read_observations_csv(path: Path) -> List[ObservationRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            altitude = row["altitude"].strip()
            records.append(
                ObservationRecord(
                    observation=BearingObservation(
                        origin=ProjectedPoint(float(row["easting"]), float(row["northing"])),
                        bearing=CompassBearing(float(row["bearing"])),
                        capture_ref=row["capture_ref"],
                        object_class=row["object_class"],
                        confidence=float(row["confidence"]),
                        sequence_index=int(row["sequence_index"]),
                        altitude=float(altitude) if altitude else None,
                        directional_code=row["directional_code"],
                    ),
                    cardinal_index=int(row["cardinal_index"]),
                    estimated_range=float(row["estimated_range"]),
                    status=row["status"],
                )
            )
    return records


# ---------------------------------------------------------------------------
# Location and outputs
# ---------------------------------------------------------------------------


def summarize(
    dataset: DatasetConfig,
    captures: Sequence[PhotoCapture],
    records: Sequence[ObservationRecord],
    stats: DetectionStats,
    clustering: ClusteringResult,
) -> DatasetSummary:
    detections: Dict[str, int] = {}
    for record in records:
        key = record.observation.object_class
        detections[key] = detections.get(key, 0) + 1
    objects: Dict[str, int] = {}
    for estimate in clustering.estimates:
        if estimate.located:
            objects[estimate.object_class] = objects.get(estimate.object_class, 0) + 1
    summary = DatasetSummary(
        dataset_id=dataset.id,
        area=dataset.area,
        photosphere_count=len(captures),
        cardinal_count=stats.cardinals,
        cardinals_analyzed=stats.cardinals_analyzed,
        failed_slices=stats.failed_slices,
        miles_travelled=measured_miles(captures),
        nominal_miles=nominal_miles(len(captures)),
        detections_by_class=dict(sorted(detections.items())),
        objects_by_class=dict(sorted(objects.items())),
        clustered=clustering.clustered_count,
        noise=len(clustering.noise),
        discarded_out_of_range=sum(1 for r in records if r.status == OUT_OF_RANGE),
        retained_pairs=clustering.retained_pairs,
        discarded_pairs=clustering.discarded_pairs,
        unlocated_objects=sum(1 for e in clustering.estimates if not e.located),
    )
    if not summary.conserved:
        raise PipelineError(
            f"{dataset.id}: {summary.total_detections} detections but "
            f"{summary.clustered} clustered + {summary.noise} noise + "
            f"{summary.discarded_out_of_range} discarded"
        )
    if summary.photosphere_count and not summary.fully_processed:
        logger.warning(
            "dataset=%s cardinals=%d expected=%d",
            dataset.id,
            summary.cardinal_count,
            expected_cardinals(summary.photosphere_count),
        )
    return summary


def locate_dataset(
    config: AppConfig,
    dataset: DatasetConfig,
    options: RunOptions = RunOptions(),
    records: Optional[Sequence[ObservationRecord]] = None,
    stats: Optional[DetectionStats] = None,
) -> DatasetRun:
    """Cluster stored observations and write estimates, features and reports."""
    paths = config.paths_for(dataset)
    captures = load_captures(config, dataset)
    if records is None:
        observations_path = paths.output(OBSERVATIONS_FILE)
        if not observations_path.exists():
            raise PipelineError(f"{dataset.id}: run detect first ({observations_path} missing)")
        records = read_observations_csv(observations_path)
    if stats is None:
        stats_path = paths.output(DETECT_STATS_FILE)
        if stats_path.exists():
            stats = DetectionStats(**read_json(stats_path))
        else:
            stats = DetectionStats(photospheres=len(captures))
    params = options.cluster or config.cluster
    kept = [r.observation for r in records if r.status == KEPT]
    clustering = cluster_observations(kept, params, dataset.id)
    summary = summarize(dataset, captures, records, stats, clustering)
    accuracy = emit_accuracy_report(clustering.estimates, {dataset.id: dataset.area})
    features = feature_collection(
        clustering.estimates, {"dataset_id": dataset.id, "area": dataset.area}
    )
    _write_outputs(paths, summary, accuracy, features, clustering)
    return DatasetRun(dataset.id, features, summary, accuracy, clustering)


def _write_outputs(
    paths: DatasetPaths,
    summary: DatasetSummary,
    accuracy: Sequence[AccuracyRow],
    features: Dict[str, Any],
    clustering: ClusteringResult,
) -> None:
    write_json(
        paths.output(ESTIMATES_FILE), [estimate_to_dict(e) for e in clustering.estimates]
    )
    write_json(paths.output(FEATURES_FILE), features)
    write_json(paths.output("summary.json"), summary.to_dict())
    buffer = io.StringIO()
    write_summary_csv([summary], buffer)
    write_text(paths.output("summary.csv"), buffer.getvalue())
    write_text(paths.output("summary.txt"), format_summary_table([summary]))
    buffer = io.StringIO()
    write_accuracy_csv(accuracy, buffer)
    write_text(paths.output("accuracy.csv"), buffer.getvalue())
    write_text(paths.output("accuracy.txt"), format_accuracy_table(accuracy))


def run_dataset(
    config: AppConfig, dataset_id: str, options: RunOptions = RunOptions()
) -> DatasetRun:
    """Stages 1-3 end to end for one dataset."""
    dataset = config.dataset(dataset_id)
    ingest_dataset(config, dataset)
    records, stats = detect_dataset(config, dataset, options)
    run = locate_dataset(config, dataset, options, records, stats)
    logger.info(
        "dataset=%s features=%d detections=%d clustered=%d noise=%d discarded=%d",
        dataset_id,
        len(run.features["features"]),
        run.summary.total_detections,
        run.summary.clustered,
        run.summary.noise,
        run.summary.discarded_out_of_range,
    )
    return run


# ---------------------------------------------------------------------------
# Cross-dataset reports
# ---------------------------------------------------------------------------


def write_reports(config: AppConfig, datasets: Sequence[DatasetConfig]) -> Path:
    """Area, dataset and accuracy tables over every located dataset."""
    summaries = []
    estimates = []
    for dataset in datasets:
        paths = config.paths_for(dataset)
        summary_path = paths.output("summary.json")
        if not summary_path.exists():
            logger.warning("dataset=%s has no summary; run locate first", dataset.id)
            continue
        summary = DatasetSummary.from_dict(read_json(summary_path))
        summaries.append(replace(summary, area=dataset.area))
        stored = read_json(paths.output(ESTIMATES_FILE))
        estimates.extend(estimate_from_dict(item) for item in stored)
    if not summaries:
        raise PipelineError("no located datasets to report on")
    report_dir = config.root / "reports"
    areas = {dataset.id: dataset.area for dataset in datasets}
    accuracy = emit_accuracy_report(estimates, areas)
    write_text(report_dir / "areas.txt", format_area_table(aggregate_by_area(summaries)))
    write_text(report_dir / "datasets.txt", format_summary_table(summaries))
    buffer = io.StringIO()
    write_summary_csv(summaries, buffer)
    write_text(report_dir / "datasets.csv", buffer.getvalue())
    write_text(report_dir / "accuracy.txt", format_accuracy_table(accuracy))
    buffer = io.StringIO()
    write_accuracy_csv(accuracy, buffer)
    write_text(report_dir / "accuracy.csv", buffer.getvalue())
    return report_dir


__all__ = [
    "DatasetRun",
    "PipelineError",
    "RunOptions",
    "detect_dataset",
    "ingest_dataset",
    "locate_dataset",
    "run_dataset",
    "slice_dataset",
    "write_reports",
]
