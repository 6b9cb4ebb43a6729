"""
Filesystem layout and artifact writers for assetlocator.

Owns every decision about where a dataset's files live. The on-disk layout
is a plain directory tree standing in for a blob store:

    datasets/<id>/
        track.csv                    # GNSS export (input)
        scene.json, ground_truth.json  # synthetic datasets only
        photospheres/<image_id>.jpg  # input rasters
        cardinals/<image_id>_C<i>_D<n>.jpg
        sidecars/<image_id>_C<i>_D<n>.json
        output/                      # captures, observations, features, reports

All writers replace files atomically and emit sorted-key JSON, so re-runs
on identical inputs leave byte-identical trees.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from .imaging import CardinalSlice, encode_jpeg
from .models import Detection, PhotoCapture

PHOTOSPHERE_SUFFIXES = (".jpg", ".jpeg", ".png")


class StorageError(OSError):
    """A file could not be read or written; `path` names the culprit."""

    def __init__(self, message: str, *, path: Path) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DatasetPaths:
    """Every per-dataset filesystem decision, computed once and passed around.

    Tests build instances by pointing `root` at a `tmp_path`.
    """

    dataset_id: str
    root: Path
    dataset_dir: Path
    track_path: Path
    photospheres_dir: Path
    cardinals_dir: Path
    sidecars_dir: Path
    output_dir: Path

    @classmethod
    def for_dataset(
        cls,
        dataset_id: str,
        *,
        root: Optional[Path] = None,
        track_path: Optional[Path] = None,
    ) -> "DatasetPaths":
        base = root if root is not None else Path(".")
        dataset_dir = base / "datasets" / dataset_id
        return cls(
            dataset_id=dataset_id,
            root=base,
            dataset_dir=dataset_dir,
            track_path=track_path if track_path is not None else dataset_dir / "track.csv",
            photospheres_dir=dataset_dir / "photospheres",
            cardinals_dir=dataset_dir / "cardinals",
            sidecars_dir=dataset_dir / "sidecars",
            output_dir=dataset_dir / "output",
        )

    @property
    def scene_path(self) -> Path:
        return self.dataset_dir / "scene.json"

    @property
    def ground_truth_path(self) -> Path:
        return self.dataset_dir / "ground_truth.json"

    def output(self, name: str) -> Path:
        return self.output_dir / name

    def ensure(self) -> None:
        for directory in (
            self.photospheres_dir,
            self.cardinals_dir,
            self.sidecars_dir,
            self.output_dir,
        ):
            try:
                directory.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise StorageError(
                    f"cannot create directory: {exc.strerror}", path=directory
                ) from exc

    def photosphere_path(self, image_id: str) -> Optional[Path]:
        for suffix in PHOTOSPHERE_SUFFIXES:
            candidate = self.photospheres_dir / f"{image_id}{suffix}"
            if candidate.exists():
                return candidate
        return None


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def write_bytes(path: Path, payload: bytes) -> Path:
    """Atomically replace `path` with `payload`."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise StorageError(f"write failed: {exc.strerror or exc}", path=path) from exc
    return path


def write_text(path: Path, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))


def dumps_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, data: Any) -> Path:
    return write_text(path, dumps_json(data))


def read_json(path: Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise StorageError(f"read failed: {exc.strerror or exc}", path=path) from exc


def write_cardinal_image(cardinal: CardinalSlice, directory: Path) -> Path:
    return write_bytes(directory / f"{cardinal.file_stem}.jpg", encode_jpeg(cardinal.raster))


def sidecar_payload(
    capture: PhotoCapture,
    cardinal: CardinalSlice,
    detections: Sequence[Detection],
) -> dict:
    return {
        "capture_id": capture.capture_id,
        "dataset_id": capture.dataset_id,
        "image_id": capture.image_ref,
        "cardinal_index": cardinal.cardinal_index,
        "center_bearing": cardinal.center_bearing.degrees,
        "directional_class": {
            "id": cardinal.directional_class.id,
            "code": cardinal.directional_class.code,
            "description": cardinal.directional_class.description,
        },
        "detections": [
            {
                "object_class": d.object_class,
                "bbox": list(d.bbox),
                "confidence": d.confidence,
            }
            for d in detections
        ],
    }


def write_metadata_sidecar(
    capture: PhotoCapture,
    cardinal: CardinalSlice,
    detections: Sequence[Detection],
    directory: Path,
) -> Path:
    """Write `<image_id>_C<i>_D<n>.json` next to the slice; overwrites in place."""
    return write_json(
        directory / f"{cardinal.file_stem}.json",
        sidecar_payload(capture, cardinal, detections),
    )
