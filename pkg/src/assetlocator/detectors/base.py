"""
Abstract base class and shared plumbing for object-detection backends.

Every backend answers one question: which objects are visible in this
cardinal slice? Backends implement `_query`; `Detector.detect` applies the
confidence threshold and the ordering contract (descending confidence)
uniformly so callers never depend on a vendor's ordering.
"""

from __future__ import annotations

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable, Tuple

from ..imaging import CardinalSlice, ImagingConfig, pixel_bearing
from ..models import CompassBearing, Detection

logger = logging.getLogger(__name__)

DEFAULT_MIN_CONFIDENCE = 0.5
DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_SECONDS = 1.0


class DetectorError(RuntimeError):
    """Base class for backend failures; `retryable` drives the retry loop."""

    retryable = False

    def __init__(self, message: str, *, payload: bytes = b"") -> None:
        super().__init__(message)
        self.payload = payload


class BackendUnavailable(DetectorError):
    retryable = True


class RateLimited(DetectorError):
    retryable = True


class MalformedResponse(DetectorError):
    """The backend answered, but not in a shape we can read. Payload kept for audit."""


@dataclass(frozen=True)
class DetectorResponse:
    detections: Tuple[Detection, ...] = ()
    latency_ms: float = 0.0
    raw_payload: bytes = field(default=b"", repr=False)


def _ordering_key(detection: Detection) -> tuple:
    return (-detection.confidence, detection.object_class, detection.bbox)


class Detector(ABC):
    """Base class for detection backends.

    Subclasses set `backend_name` and implement `_query`, returning every
    candidate the backend reported for the slice.
    """

    backend_name: str = "unknown"

    def detect(
        self,
        cardinal: CardinalSlice,
        min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    ) -> DetectorResponse:
        if cardinal.raster.size == 0:
            raise ValueError(f"{cardinal.file_stem}: slice raster is empty")
        response = self._query(cardinal)
        kept = sorted(
            (d for d in response.detections if d.confidence >= min_confidence),
            key=_ordering_key,
        )
        for detection in kept:
            if (
                detection.capture_ref != cardinal.capture_id
                or detection.cardinal_index != cardinal.cardinal_index
            ):
                raise MalformedResponse(
                    f"{self.backend_name}: detection does not reference {cardinal.file_stem}",
                    payload=response.raw_payload,
                )
        return replace(response, detections=tuple(kept))

    @abstractmethod
    def _query(self, cardinal: CardinalSlice) -> DetectorResponse:
        """Return every detection the backend reports for `cardinal`."""


def detect_with_retry(
    detector: Detector,
    cardinal: CardinalSlice,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    *,
    attempts: int = DEFAULT_ATTEMPTS,
    backoff_seconds: float = DEFAULT_BACKOFF_SECONDS,
    sleep: Callable[[float], None] = time.sleep,
) -> DetectorResponse:
    """Call `detect`, retrying retryable failures with exponential backoff.

    Waits `backoff_seconds * 2**k` between attempt k+1 and k+2. The last
    error is re-raised once attempts are exhausted; non-retryable errors
    are raised immediately.
    """
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    for attempt in range(1, attempts + 1):
        try:
            return detector.detect(cardinal, min_confidence)
        except DetectorError as exc:
            if not exc.retryable or attempt == attempts:
                raise
            delay = backoff_seconds * (2 ** (attempt - 1))
            logger.warning(
                "detector=%s slice=%s attempt=%d error=%r retry_in=%.1fs",
                detector.backend_name,
                cardinal.file_stem,
                attempt,
                str(exc),
                delay,
            )
            sleep(delay)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Detection geometry
# ---------------------------------------------------------------------------


def global_column(detection: Detection, cfg: ImagingConfig) -> float:
    """Photosphere column of the bbox centre."""
    return cfg.cardinal_width * (detection.cardinal_index - 1) + detection.center_x


def bbox_to_bearing(
    detection: Detection,
    cardinal: CardinalSlice | None,
    heading: CompassBearing,
    cfg: ImagingConfig,
) -> CompassBearing:
    """Object direction (theta_s) of a detection's bbox centre.

    `cardinal`, when given, must be the slice the detection came from.
    """
    if cardinal is not None and cardinal.cardinal_index != detection.cardinal_index:
        raise ValueError(
            f"detection from cardinal {detection.cardinal_index} does not belong to "
            f"{cardinal.file_stem}"
        )
    return pixel_bearing(heading, global_column(detection, cfg), cfg)


def estimate_range(detection: Detection, cfg: ImagingConfig, object_width_ft: float) -> float:
    """Distance implied by the bbox's angular width for an object of known width."""
    angular = math.radians(detection.width * cfg.degrees_per_pixel)
    if angular <= 0:
        return math.inf
    return object_width_ft / (2.0 * math.tan(angular / 2.0))
