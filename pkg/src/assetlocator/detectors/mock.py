"""
Deterministic detector that echoes a ground-truth file.

The ground-truth file is written by `assetlocator synth` and maps each
capture id to the detections an ideal detector would report:

    {"detections": {"<capture_id>": [
        {"cardinal_index": 1, "object_class": "stop_sign",
         "bbox": [x0, y0, x1, y1], "confidence": 1.0, "slice_size": 1000}
    ]}}

No pixels are inspected; identical slice identity yields identical output.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Union

from ..imaging import CardinalSlice
from ..models import Detection, normalize_object_class
from .base import Detector, DetectorResponse, MalformedResponse


def detection_to_dict(detection: Detection) -> dict:
    return {
        "cardinal_index": detection.cardinal_index,
        "object_class": detection.object_class,
        "bbox": list(detection.bbox),
        "confidence": detection.confidence,
        "slice_size": detection.slice_size,
    }


def detection_from_dict(capture_ref: str, data: Mapping) -> Detection:
    x_min, y_min, x_max, y_max = (float(value) for value in data["bbox"])
    return Detection(
        capture_ref=capture_ref,
        cardinal_index=int(data["cardinal_index"]),
        object_class=normalize_object_class(str(data["object_class"])),
        bbox=(x_min, y_min, x_max, y_max),
        confidence=float(data.get("confidence", 1.0)),
        slice_size=int(data.get("slice_size", 1000)),
    )


def load_ground_truth(path: Union[str, Path]) -> Dict[str, List[Detection]]:
    """Parse a ground-truth file into per-capture detection lists."""
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    entries = data.get("detections", data) if isinstance(data, dict) else None
    if not isinstance(entries, dict):
        raise ValueError(f"{path}: ground truth must map capture ids to detection lists")
    return {
        str(capture_ref): [detection_from_dict(str(capture_ref), item) for item in items]
        for capture_ref, items in entries.items()
    }


def dump_ground_truth(detections: Mapping[str, Sequence[Detection]]) -> dict:
    return {
        "detections": {
            capture_ref: [detection_to_dict(d) for d in items]
            for capture_ref, items in sorted(detections.items())
        }
    }


class MockDetector(Detector):
    """Detector backed by precomputed ground truth."""

    backend_name = "mock"

    def __init__(self, ground_truth: Mapping[str, Iterable[Detection]]):
        self._ground_truth = {key: tuple(value) for key, value in ground_truth.items()}

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "MockDetector":
        return cls(load_ground_truth(path))

    def _query(self, cardinal: CardinalSlice) -> DetectorResponse:
        hits = tuple(
            detection
            for detection in self._ground_truth.get(cardinal.capture_id, ())
            if detection.cardinal_index == cardinal.cardinal_index
        )
        for detection in hits:
            if detection.slice_size != cardinal.size:
                raise MalformedResponse(
                    f"ground truth for {cardinal.file_stem} assumes {detection.slice_size}px "
                    f"slices, raster is {cardinal.size}px"
                )
        payload = json.dumps(
            [detection_to_dict(d) for d in hits], sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        return DetectorResponse(detections=hits, latency_ms=0.0, raw_payload=payload)
