"""
Dataset summaries, accuracy tables and GeoJSON feature output.

Everything here is a pure transformation of pipeline results into rows,
dicts or text; writing to disk goes through `storage`.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .geodesy import FEET_PER_MILE
from .models import KNOWN_OBJECT_CLASSES, GeoPoint, ObjectEstimate, ProjectedPoint

NOMINAL_STEP_FT = 10.0
ACCURACY_SCALE = 1e4
ALL_AREAS = "All"


def nominal_miles(capture_count: int, step_ft: float = NOMINAL_STEP_FT) -> float:
    """Distance implied by the capture count at one capture per `step_ft`."""
    return capture_count * step_ft / FEET_PER_MILE


def expected_cardinals(photosphere_count: int, cardinal_count: int = 8) -> int:
    return photosphere_count * cardinal_count


def _sample_sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float), ddof=1))


def _class_columns(*mappings: Mapping[str, Any]) -> List[str]:
    extra = sorted({key for mapping in mappings for key in mapping} - set(KNOWN_OBJECT_CLASSES))
    return list(KNOWN_OBJECT_CLASSES) + extra


# ---------------------------------------------------------------------------
# Dataset summary
# ---------------------------------------------------------------------------


@dataclass
class DatasetSummary:
    """Bookkeeping for one processed dataset.

    Detections reconcile as `clustered + noise + discarded_out_of_range`.
    Per-mile rates are reported against both the measured track length and
    the nominal length implied by the capture count.
    """

    dataset_id: str
    area: str = ""
    photosphere_count: int = 0
    cardinal_count: int = 0
    cardinals_analyzed: int = 0
    failed_slices: int = 0
    miles_travelled: float = 0.0
    nominal_miles: float = 0.0
    detections_by_class: Dict[str, int] = field(default_factory=dict)
    objects_by_class: Dict[str, int] = field(default_factory=dict)
    clustered: int = 0
    noise: int = 0
    discarded_out_of_range: int = 0
    retained_pairs: int = 0
    discarded_pairs: int = 0
    unlocated_objects: int = 0

    @property
    def total_detections(self) -> int:
        return sum(self.detections_by_class.values())

    @property
    def conserved(self) -> bool:
        return self.total_detections == (
            self.clustered + self.noise + self.discarded_out_of_range
        )

    @property
    def fully_processed(self) -> bool:
        return self.cardinal_count == expected_cardinals(self.photosphere_count)

    def detections_per_mile(self, object_class: str, *, nominal: bool = False) -> float:
        miles = self.nominal_miles if nominal else self.miles_travelled
        if miles <= 0:
            return 0.0
        return self.detections_by_class.get(object_class, 0) / miles

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["total_detections"] = self.total_detections
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DatasetSummary":
        known = set(cls.__dataclass_fields__)
        return cls(**{key: value for key, value in data.items() if key in known})


@dataclass
class AreaTotals:
    area: str
    datasets: int = 0
    photosphere_count: int = 0
    cardinal_count: int = 0
    cardinals_analyzed: int = 0
    miles_travelled: float = 0.0
    nominal_miles: float = 0.0
    detections_by_class: Dict[str, int] = field(default_factory=dict)
    objects_by_class: Dict[str, int] = field(default_factory=dict)


def aggregate_by_area(summaries: Iterable[DatasetSummary]) -> List[AreaTotals]:
    """Roll dataset summaries up per area, with a trailing `All` row."""
    totals: Dict[str, AreaTotals] = {}
    grand = AreaTotals(area=ALL_AREAS)
    for summary in summaries:
        area = summary.area or "unassigned"
        for target in (totals.setdefault(area, AreaTotals(area=area)), grand):
            target.datasets += 1
            target.photosphere_count += summary.photosphere_count
            target.cardinal_count += summary.cardinal_count
            target.cardinals_analyzed += summary.cardinals_analyzed
            target.miles_travelled += summary.miles_travelled
            target.nominal_miles += summary.nominal_miles
            for key, count in summary.detections_by_class.items():
                target.detections_by_class[key] = target.detections_by_class.get(key, 0) + count
            for key, count in summary.objects_by_class.items():
                target.objects_by_class[key] = target.objects_by_class.get(key, 0) + count
    return [totals[area] for area in sorted(totals)] + [grand]


def format_area_table(rows: Sequence[AreaTotals]) -> str:
    classes = _class_columns(*(r.detections_by_class for r in rows))
    header = (
        f"{'Area':20}{'Datasets':>10}{'Photospheres':>14}{'Cardinals':>12}{'Analyzed':>10}"
        f"{'Miles':>10}"
        + "".join(f"{name + ' det':>20}{name + ' obj':>20}" for name in classes)
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.area:20}{row.datasets:10d}{row.photosphere_count:14,d}"
            f"{row.cardinal_count:12,d}{row.cardinals_analyzed:10,d}{row.miles_travelled:10.1f}"
            + "".join(
                f"{row.detections_by_class.get(name, 0):20,d}"
                f"{row.objects_by_class.get(name, 0):20,d}"
                for name in classes
            )
        )
    return "\n".join(lines) + "\n"


def format_summary_table(summaries: Sequence[DatasetSummary]) -> str:
    """Per-dataset counts and detection rates per measured and nominal mile."""
    classes = _class_columns(*(s.detections_by_class for s in summaries))
    header = (
        f"{'Dataset':12}{'Area':20}{'Photospheres':>14}{'Cardinals':>12}{'Miles':>10}"
        f"{'Nominal mi':>12}"
        + "".join(f"{name:>16}{'/mi':>9}{'/nom mi':>9}" for name in classes)
    )
    lines = [header, "-" * len(header)]
    for summary in summaries:
        lines.append(
            f"{summary.dataset_id:12}{summary.area:20}{summary.photosphere_count:14,d}"
            f"{summary.cardinal_count:12,d}{summary.miles_travelled:10.2f}"
            f"{summary.nominal_miles:12.2f}"
            + "".join(
                f"{summary.detections_by_class.get(name, 0):16,d}"
                f"{summary.detections_per_mile(name):9.2f}"
                f"{summary.detections_per_mile(name, nominal=True):9.2f}"
                for name in classes
            )
        )
    return "\n".join(lines) + "\n"


def write_summary_csv(summaries: Sequence[DatasetSummary], stream: TextIO) -> None:
    classes = _class_columns(*(s.detections_by_class for s in summaries))
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(
        [
            "dataset_id",
            "area",
            "photospheres",
            "cardinals",
            "cardinals_analyzed",
            "failed_slices",
            "miles_travelled",
            "nominal_miles",
            "clustered",
            "noise",
            "discarded_out_of_range",
            "retained_pairs",
            "discarded_pairs",
        ]
        + [f"{name}_{suffix}" for name in classes for suffix in ("detections", "objects")]
    )
    for s in summaries:
        writer.writerow(
            [
                s.dataset_id,
                s.area,
                s.photosphere_count,
                s.cardinal_count,
                s.cardinals_analyzed,
                s.failed_slices,
                repr(s.miles_travelled),
                repr(s.nominal_miles),
                s.clustered,
                s.noise,
                s.discarded_out_of_range,
                s.retained_pairs,
                s.discarded_pairs,
            ]
            + [
                value
                for name in classes
                for value in (
                    s.detections_by_class.get(name, 0),
                    s.objects_by_class.get(name, 0),
                )
            ]
        )


# ---------------------------------------------------------------------------
# Accuracy report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyRow:
    """Spread statistics of per-object sigmas for one (area, class); degrees."""

    area: str
    object_class: str
    n: int
    sigma_lat_mean: float
    sigma_lat_sd: float
    sigma_lat_max: float
    sigma_lon_mean: float
    sigma_lon_sd: float
    sigma_lon_max: float


ACCURACY_COLUMNS: Tuple[str, ...] = (
    "area",
    "object_class",
    "n",
    "sigma_lat_mean",
    "sigma_lat_sd",
    "sigma_lat_max",
    "sigma_lon_mean",
    "sigma_lon_sd",
    "sigma_lon_max",
)


def _accuracy_row(area: str, object_class: str, estimates: Sequence[ObjectEstimate]) -> AccuracyRow:
    lat = [e.sigma_lat for e in estimates]
    lon = [e.sigma_lon for e in estimates]
    return AccuracyRow(
        area=area,
        object_class=object_class,
        n=len(estimates),
        sigma_lat_mean=float(np.mean(lat)),
        sigma_lat_sd=_sample_sd(lat),
        sigma_lat_max=max(lat),
        sigma_lon_mean=float(np.mean(lon)),
        sigma_lon_sd=_sample_sd(lon),
        sigma_lon_max=max(lon),
    )


def emit_accuracy_report(
    estimates: Sequence[ObjectEstimate],
    areas: Optional[Mapping[str, str]] = None,
) -> List[AccuracyRow]:
    """Rows per (area, class), classes in order, each closed by an `All` row.

    `areas` maps dataset ids to area labels; unlocated estimates are left
    out because they carry no sigmas.
    """
    areas = areas or {}
    grouped: Dict[str, Dict[str, List[ObjectEstimate]]] = {}
    for estimate in estimates:
        if not estimate.located:
            continue
        area = areas.get(estimate.dataset_id, "") or "unassigned"
        grouped.setdefault(estimate.object_class, {}).setdefault(area, []).append(estimate)

    rows: List[AccuracyRow] = []
    for object_class in _class_columns(grouped):
        by_area = grouped.get(object_class)
        if not by_area:
            continue
        for area in sorted(by_area):
            rows.append(_accuracy_row(area, object_class, by_area[area]))
        rows.append(
            _accuracy_row(
                ALL_AREAS,
                object_class,
                [e for area in sorted(by_area) for e in by_area[area]],
            )
        )
    return rows


def format_accuracy_table(rows: Sequence[AccuracyRow]) -> str:
    header = (
        f"{'Class':16}{'Area':20}{'N':>6}"
        f"{'lat mean':>12}{'lat sd':>12}{'lat max':>12}"
        f"{'lon mean':>12}{'lon sd':>12}{'lon max':>12}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.object_class:16}{row.area:20}{row.n:6d}"
            f"{row.sigma_lat_mean * ACCURACY_SCALE:12.4f}"
            f"{row.sigma_lat_sd * ACCURACY_SCALE:12.4f}"
            f"{row.sigma_lat_max * ACCURACY_SCALE:12.4f}"
            f"{row.sigma_lon_mean * ACCURACY_SCALE:12.4f}"
            f"{row.sigma_lon_sd * ACCURACY_SCALE:12.4f}"
            f"{row.sigma_lon_max * ACCURACY_SCALE:12.4f}"
        )
    lines.append("-" * len(header))
    lines.append("Displayed values scaled x10^-4 (degrees)")
    return "\n".join(lines) + "\n"


def write_accuracy_csv(rows: Sequence[AccuracyRow], stream: TextIO) -> None:
    """Unscaled degrees, written with `repr` for exact re-reads."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ACCURACY_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.area,
                row.object_class,
                row.n,
                repr(row.sigma_lat_mean),
                repr(row.sigma_lat_sd),
                repr(row.sigma_lat_max),
                repr(row.sigma_lon_mean),
                repr(row.sigma_lon_sd),
                repr(row.sigma_lon_max),
            ]
        )


# ---------------------------------------------------------------------------
# Estimates and GeoJSON
# ---------------------------------------------------------------------------


def estimate_to_dict(estimate: ObjectEstimate) -> Dict[str, Any]:
    data = asdict(estimate)
    data["located"] = estimate.located
    return data


def estimate_from_dict(data: Mapping[str, Any]) -> ObjectEstimate:
    position = data.get("mean_position")
    projected = data.get("mean_projected")
    known = set(ObjectEstimate.__dataclass_fields__) - {"mean_position", "mean_projected"}
    return ObjectEstimate(
        mean_position=GeoPoint(**position) if position else None,
        mean_projected=ProjectedPoint(**projected) if projected else None,
        **{key: value for key, value in data.items() if key in known},
    )


def feature_properties(estimate: ObjectEstimate) -> Dict[str, Any]:
    return {
        "object_class": estimate.object_class,
        "dataset_id": estimate.dataset_id,
        "cluster_id": estimate.cluster_id,
        "sigma_lat": estimate.sigma_lat,
        "sigma_lon": estimate.sigma_lon,
        "support_detections": estimate.support_detections,
        "support_pairs": estimate.support_pairs,
        "mean_object_distance_ft": estimate.mean_object_distance,
        "sd_object_distance_ft": estimate.sd_object_distance,
        "mean_drive_step_ft": estimate.mean_drive_step,
        "sd_drive_step_ft": estimate.sd_drive_step,
        "directional_class": estimate.best_directional_code,
        "altitude_ft": estimate.mean_position.altitude if estimate.mean_position else None,
    }


class FeatureCollectionWriter:
    """Accumulates point features; coordinates are written `[lon, lat]`."""

    def __init__(self, properties: Optional[Mapping[str, Any]] = None) -> None:
        self.features: List[Dict[str, Any]] = []
        self.properties = dict(properties or {})

    def add_point(self, latitude: float, longitude: float, properties: Mapping[str, Any]) -> None:
        self.features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [longitude, latitude]},
                "properties": dict(properties),
            }
        )

    def add_estimate(self, estimate: ObjectEstimate) -> bool:
        if estimate.mean_position is None:
            return False
        self.add_point(
            estimate.mean_position.latitude,
            estimate.mean_position.longitude,
            feature_properties(estimate),
        )
        return True

    def to_dict(self) -> Dict[str, Any]:
        collection: Dict[str, Any] = {"type": "FeatureCollection", "features": self.features}
        if self.properties:
            collection["properties"] = self.properties
        return collection


def feature_collection(
    estimates: Iterable[ObjectEstimate], properties: Optional[Mapping[str, Any]] = None
) -> Dict[str, Any]:
    writer = FeatureCollectionWriter(properties)
    for estimate in estimates:
        writer.add_estimate(estimate)
    return writer.to_dict()
