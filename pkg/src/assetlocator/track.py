"""
GNSS track ingestion.

A track CSV carries one row per photosphere capture. Column names differ
between exports, so a `ColumnMap` (usually a named profile from the
configuration) says which header holds what. Rows are projected into
State Plane feet, sorted by timestamp and given a corrected heading, either
from an explicit heading column or derived from consecutive fixes.

Row numbers in messages count the header as row 1, matching the gutter a
spreadsheet user sees.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .geodesy import (
    FEET_PER_MILE,
    ZeroDisplacement,
    derive_headings,
    planar_distance,
    project_many,
)
from .models import CompassBearing, GeoPoint, PhotoCapture, ProjectedPoint

logger = logging.getLogger(__name__)

WEST_NEGATIVE = "west_negative"
WEST_POSITIVE = "west_positive"
SIGN_CONVENTIONS = (WEST_NEGATIVE, WEST_POSITIVE)

SPACING_WARNING_FT = 50.0

CAPTURE_COLUMNS: Tuple[str, ...] = (
    "capture_id",
    "image_id",
    "dataset_id",
    "sequence_index",
    "timestamp",
    "latitude",
    "longitude",
    "altitude",
    "easting",
    "northing",
    "heading",
)


class TrackError(ValueError):
    """Base class for track ingestion failures."""


class MissingColumn(TrackError):
    def __init__(self, column: str, path: Union[str, Path]) -> None:
        super().__init__(f"{path}: required column '{column}' not in header")
        self.column = column


class UnparseableRow(TrackError):
    def __init__(self, message: str, *, row_number: int) -> None:
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class EmptyTrack(TrackError):
    """Fewer than two usable captures; no heading can be derived."""


@dataclass(frozen=True)
class ColumnMap:
    """Header names for each capture field; optional fields may be None."""

    image_id: str = "image_id"
    timestamp: str = "timestamp"
    latitude: str = "latitude"
    longitude: str = "longitude"
    altitude: Optional[str] = "altitude"
    heading: Optional[str] = "heading"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ColumnMap":
        defaults = cls()
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown column-map keys: {', '.join(sorted(unknown))}")

        def _column(key: str, default: Optional[str]) -> Optional[str]:
            value = data.get(key, default)
            if value is None:
                return None
            text = str(value).strip()
            if not text:
                raise ValueError(f"column name for '{key}' must not be blank")
            return text

        return cls(
            image_id=_column("image_id", defaults.image_id) or defaults.image_id,
            timestamp=_column("timestamp", defaults.timestamp) or defaults.timestamp,
            latitude=_column("latitude", defaults.latitude) or defaults.latitude,
            longitude=_column("longitude", defaults.longitude) or defaults.longitude,
            altitude=_column("altitude", defaults.altitude),
            heading=_column("heading", defaults.heading),
        )


DEFAULT_PROFILE = "default"
BUNDLED_PROFILES: Dict[str, ColumnMap] = {
    DEFAULT_PROFILE: ColumnMap(),
    # Field names of the Applanix/Trimble per-image GNSS export.
    "applanix": ColumnMap(
        image_id="ImageID",
        timestamp="GPSTime",
        latitude="Latitude",
        longitude="Longitude",
        altitude="Altitude",
        heading="Heading",
    ),
}


@dataclass(frozen=True)
class _TrackRow:
    row_number: int
    image_id: str
    timestamp: datetime
    position: GeoPoint
    heading: Optional[CompassBearing]


def parse_timestamp(raw: str) -> datetime:
    """GPS seconds (numeric) or ISO-8601; naive values are taken as UTC."""
    text = raw.strip()
    if not text:
        raise ValueError("timestamp is blank")
    try:
        seconds = float(text)
    except ValueError:
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        parsed = datetime.fromisoformat(text)
        if parsed.tzinfo is None:
            return parsed.replace(tzinfo=timezone.utc)
        return parsed.astimezone(timezone.utc)
    if not math.isfinite(seconds):
        raise ValueError(f"timestamp {raw!r} is not finite")
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


def _parse_float(row: Mapping[str, str], column: str, row_number: int) -> float:
    raw = (row.get(column) or "").strip()
    if not raw:
        raise UnparseableRow(f"'{column}' is blank", row_number=row_number)
    try:
        value = float(raw)
    except ValueError as exc:
        raise UnparseableRow(
            f"'{column}' value {raw!r} is not a number", row_number=row_number
        ) from exc
    if not math.isfinite(value):
        raise UnparseableRow(f"'{column}' value {raw!r} is not finite", row_number=row_number)
    return value


def _parse_row(
    row: Mapping[str, str],
    row_number: int,
    columns: ColumnMap,
    sign_convention: str,
) -> _TrackRow:
    image_id = (row.get(columns.image_id) or "").strip()
    if not image_id:
        raise UnparseableRow(f"'{columns.image_id}' is blank", row_number=row_number)
    try:
        timestamp = parse_timestamp(row.get(columns.timestamp) or "")
    except ValueError as exc:
        raise UnparseableRow(f"bad timestamp: {exc}", row_number=row_number) from exc
    latitude = _parse_float(row, columns.latitude, row_number)
    longitude = _parse_float(row, columns.longitude, row_number)
    if sign_convention == WEST_POSITIVE:
        longitude = -longitude
    altitude = None
    if columns.altitude and (row.get(columns.altitude) or "").strip():
        altitude = _parse_float(row, columns.altitude, row_number)
    heading = None
    if columns.heading and (row.get(columns.heading) or "").strip():
        heading = CompassBearing(_parse_float(row, columns.heading, row_number))
    if abs(latitude) >= 90.0:
        raise UnparseableRow(f"latitude {latitude} cannot be projected", row_number=row_number)
    try:
        position = GeoPoint(latitude, longitude, altitude)
    except ValueError as exc:
        raise UnparseableRow(str(exc), row_number=row_number) from exc
    return _TrackRow(row_number, image_id, timestamp, position, heading)


def read_track_rows(
    csv_path: Union[str, Path],
    columns: ColumnMap,
    sign_convention: str = WEST_NEGATIVE,
    delimiter: str = ",",
) -> List[_TrackRow]:
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValueError(
            f"Unknown longitude convention '{sign_convention}'. "
            f"Expected one of: {', '.join(SIGN_CONVENTIONS)}"
        )
    rows: List[_TrackRow] = []
    seen: Dict[str, int] = {}
    with open(csv_path, "r", encoding="utf-8-sig", newline="") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        header = reader.fieldnames or []
        for required in (columns.image_id, columns.timestamp, columns.latitude, columns.longitude):
            if required not in header:
                raise MissingColumn(required, csv_path)
        for row_number, row in enumerate(reader, start=2):
            try:
                parsed = _parse_row(row, row_number, columns, sign_convention)
                if parsed.image_id in seen:
                    raise UnparseableRow(
                        f"image id '{parsed.image_id}' already used on row "
                        f"{seen[parsed.image_id]}",
                        row_number=row_number,
                    )
            except UnparseableRow as exc:
                logger.warning("track=%s skipped %s", Path(csv_path).name, exc)
                continue
            seen[parsed.image_id] = row_number
            rows.append(parsed)
    return rows


def ingest_track(
    csv_path: Union[str, Path],
    dataset_id: str,
    column_map: Optional[ColumnMap] = None,
    sign_convention: str = WEST_NEGATIVE,
    delimiter: str = ",",
) -> List[PhotoCapture]:
    """Parse, project, sort and head every capture of one track file."""
    columns = column_map or ColumnMap()
    rows = read_track_rows(csv_path, columns, sign_convention, delimiter)
    if len(rows) < 2:
        raise EmptyTrack(
            f"{csv_path}: {len(rows)} usable capture(s); at least two are needed"
        )
    rows.sort(key=lambda r: (r.timestamp, r.row_number))
    for previous, current in zip(rows, rows[1:]):
        if previous.timestamp == current.timestamp:
            logger.warning(
                "track=%s rows %d and %d share timestamp %s",
                Path(csv_path).name,
                previous.row_number,
                current.row_number,
                current.timestamp.isoformat(),
            )

    eastings, northings = project_many(
        [r.position.latitude for r in rows], [r.position.longitude for r in rows]
    )
    projected = [ProjectedPoint(float(e), float(n)) for e, n in zip(eastings, northings)]

    derived: Optional[List[CompassBearing]] = None
    if any(r.heading is None for r in rows):
        try:
            derived = derive_headings(projected)
        except ZeroDisplacement as exc:
            raise EmptyTrack(f"{csv_path}: {exc}") from exc

    captures = []
    for index, (row, point) in enumerate(zip(rows, projected)):
        heading = row.heading
        if heading is None:
            assert derived is not None
            heading = derived[index]
        captures.append(
            PhotoCapture(
                capture_id=row.image_id,
                dataset_id=dataset_id,
                timestamp=row.timestamp,
                position=row.position,
                projected=point,
                heading=heading,
                sequence_index=index,
                image_id=row.image_id,
            )
        )
    check_spacing(captures)
    logger.info(
        "track=%s dataset=%s captures=%d derived_headings=%d",
        Path(csv_path).name,
        dataset_id,
        len(captures),
        sum(1 for r in rows if r.heading is None),
    )
    return captures


def check_spacing(
    captures: Sequence[PhotoCapture], limit_ft: float = SPACING_WARNING_FT
) -> List[Tuple[str, float]]:
    """Log (and return) consecutive captures further apart than `limit_ft`."""
    gaps = []
    for previous, current in zip(captures, captures[1:]):
        gap = planar_distance(previous.projected, current.projected)
        if gap > limit_ft:
            gaps.append((current.capture_id, gap))
            logger.warning(
                "capture=%s spacing_ft=%.1f exceeds %.0f ft", current.capture_id, gap, limit_ft
            )
    return gaps


def measured_miles(captures: Sequence[PhotoCapture]) -> float:
    total = sum(planar_distance(a.projected, b.projected) for a, b in zip(captures, captures[1:]))
    return total / FEET_PER_MILE


# ---------------------------------------------------------------------------
# Normalised capture table
# ---------------------------------------------------------------------------


def _format_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_captures_csv(captures: Sequence[PhotoCapture], stream) -> None:
    """Write the normalised track; floats via `repr` so re-reads are exact."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CAPTURE_COLUMNS)
    for capture in captures:
        writer.writerow(
            [
                capture.capture_id,
                capture.image_ref,
                capture.dataset_id,
                capture.sequence_index,
                capture.timestamp.isoformat(),
                _format_float(capture.position.latitude),
                _format_float(capture.position.longitude),
                _format_float(capture.position.altitude),
                _format_float(capture.projected.easting),
                _format_float(capture.projected.northing),
                _format_float(capture.heading.degrees),
            ]
        )


def read_captures_csv(path: Union[str, Path]) -> List[PhotoCapture]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in CAPTURE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumn(missing[0], path)
        captures = []
        for row_number, row in enumerate(reader, start=2):
            try:
                altitude = row["altitude"].strip()
                captures.append(
                    PhotoCapture(
                        capture_id=row["capture_id"],
                        dataset_id=row["dataset_id"],
                        timestamp=parse_timestamp(row["timestamp"]),
                        position=GeoPoint(
                            float(row["latitude"]),
                            float(row["longitude"]),
                            float(altitude) if altitude else None,
                        ),
                        projected=ProjectedPoint(float(row["easting"]), float(row["northing"])),
                        heading=CompassBearing(float(row["heading"])),
                        sequence_index=int(row["sequence_index"]),
                        image_id=row["image_id"],
                    )
                )
            except ValueError as exc:
                raise UnparseableRow(str(exc), row_number=row_number) from exc
    return sorted(captures, key=lambda c: c.sequence_index)

