"""
Shared pytest configuration and helpers for the AssetLocator test suite.

Two responsibilities:

1. Put the project's `src/` on `sys.path` so the tests can `import assetlocator`
   without having to install the package first.
2. Provide helpers that the pipeline and CLI tests depend on:
   - `sandboxed_paths`: a `DatasetPaths` rooted inside `tmp_path`.
   - `write_config`: write a YAML config whose `root` is `tmp_path`, so every
     dataset directory and report lands in the sandbox.
   - `make_observation`: terse `BearingObservation` construction for the
     geometry tests.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
FIXTURES = Path(__file__).resolve().parent / "fixtures"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

# Importing after `sys.path` is set up so the package is resolvable.
from assetlocator.models import (  # noqa: E402
    STOP_SIGN,
    BearingObservation,
    CompassBearing,
    ProjectedPoint,
)
from assetlocator.storage import DatasetPaths  # noqa: E402

# Small rasters keep placeholder slicing and JPEG encoding fast.
TEST_IMAGING = {"width": 800}


def sandboxed_paths(tmp_path: Path, dataset_id: str = "test") -> DatasetPaths:
    """Per-dataset layout under `tmp_path`; never touches the working tree."""
    return DatasetPaths.for_dataset(dataset_id, root=tmp_path)


def write_config(
    tmp_path: Path,
    datasets: List[Dict[str, Any]],
    *,
    name: str = "assetlocator.yaml",
    **sections: Any,
) -> Path:
    """Write a config file rooted at `tmp_path` and return its path."""
    data: Dict[str, Any] = {"root": str(tmp_path), "jobs": 2, "imaging": dict(TEST_IMAGING)}
    data.update(sections)
    data["datasets"] = datasets
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return path


def synthetic_dataset(
    dataset_id: str = "synth",
    area: str = "Anaheim Hills",
    scene: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    return {"id": dataset_id, "area": area, "synthetic": scene or {"seed": 3}}


def make_observation(
    easting: float,
    northing: float,
    bearing: float,
    *,
    ref: str = "cap",
    sequence_index: int = 0,
    object_class: str = STOP_SIGN,
    confidence: float = 0.9,
) -> BearingObservation:
    return BearingObservation(
        origin=ProjectedPoint(easting, northing),
        bearing=CompassBearing(bearing),
        capture_ref=ref,
        object_class=object_class,
        confidence=confidence,
        sequence_index=sequence_index,
    )
