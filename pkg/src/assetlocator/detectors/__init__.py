"""
Detection backends that turn cardinal slices into `Detection` records.
"""

from .base import (
    BackendUnavailable,
    Detector,
    DetectorError,
    DetectorResponse,
    MalformedResponse,
    RateLimited,
    bbox_to_bearing,
    detect_with_retry,
    estimate_range,
    global_column,
)
from .http import HttpDetector
from .mock import MockDetector

__all__ = [
    "BackendUnavailable",
    "Detector",
    "DetectorError",
    "DetectorResponse",
    "HttpDetector",
    "MalformedResponse",
    "MockDetector",
    "RateLimited",
    "bbox_to_bearing",
    "detect_with_retry",
    "estimate_range",
    "global_column",
]
