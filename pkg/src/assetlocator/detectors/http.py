"""
Generic HTTP vision-service adapter.

Wire protocol: the slice is POSTed as JPEG bytes; the service answers with
JSON in the generic shape

    [{"class": "stop_sign", "bbox": [x0, y0, x1, y1], "score": 0.93}, ...]

(optionally wrapped as `{"detections": [...]}`). Vendor replies are folded
onto that shape by a named mapper, so the pipeline never depends on one
particular service.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
import urllib.error
import urllib.request
from typing import Any, Callable, Dict, List, Mapping, Optional

from ..imaging import CardinalSlice, encode_jpeg
from ..models import Detection, normalize_object_class
from .base import (
    BackendUnavailable,
    Detector,
    DetectorError,
    DetectorResponse,
    MalformedResponse,
    RateLimited,
)

logger = logging.getLogger(__name__)

HTTP_USER_AGENT = "assetlocator/1.0"
DEFAULT_API_KEY_HEADER = "X-API-Key"
DEFAULT_MAX_IN_FLIGHT = 8
DEFAULT_TIMEOUT_SECONDS = 30.0

GenericBox = Dict[str, Any]
ResponseMapper = Callable[[Any, int], List[GenericBox]]


def post_image(url: str, body: bytes, headers: Mapping[str, str], timeout: float) -> bytes:
    """POST `body` and return the raw reply. Tests monkeypatch this function."""
    request = urllib.request.Request(url, data=body, headers=dict(headers), method="POST")
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return response.read()


# ---------------------------------------------------------------------------
# Vendor mappers
# ---------------------------------------------------------------------------


def map_generic(payload: Any, slice_size: int) -> List[GenericBox]:
    if isinstance(payload, dict):
        payload = payload.get("detections")
    if not isinstance(payload, list):
        raise ValueError("expected a list of detections")
    return [
        {"class": item["class"], "bbox": list(item["bbox"]), "score": item["score"]}
        for item in payload
    ]


def map_custom_vision(payload: Any, slice_size: int) -> List[GenericBox]:
    """Prediction replies with normalised `boundingBox` {left, top, width, height}."""
    if not isinstance(payload, dict) or not isinstance(payload.get("predictions"), list):
        raise ValueError("expected an object with a 'predictions' list")
    boxes = []
    for item in payload["predictions"]:
        box = item["boundingBox"]
        left = float(box["left"]) * slice_size
        top = float(box["top"]) * slice_size
        boxes.append(
            {
                "class": item["tagName"],
                "bbox": [
                    left,
                    top,
                    left + float(box["width"]) * slice_size,
                    top + float(box["height"]) * slice_size,
                ],
                "score": item["probability"],
            }
        )
    return boxes


MAPPERS: Dict[str, ResponseMapper] = {
    "generic": map_generic,
    "custom_vision": map_custom_vision,
}


def _clip(value: float, upper: int) -> float:
    return min(max(value, 0.0), float(upper))


class HttpDetector(Detector):
    """Detector that talks to any service speaking (or mapped onto) the generic protocol."""

    backend_name = "http"

    def __init__(
        self,
        endpoint: str,
        *,
        api_key: Optional[str] = None,
        api_key_header: str = DEFAULT_API_KEY_HEADER,
        mapper: str = "generic",
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ) -> None:
        if not endpoint:
            raise ValueError("HTTP detector needs an endpoint URL")
        if mapper not in MAPPERS:
            raise ValueError(f"Unknown response mapper '{mapper}'. Available: {', '.join(MAPPERS)}")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self.endpoint = endpoint
        self.api_key = api_key
        self.api_key_header = api_key_header
        self.mapper_name = mapper
        self.timeout = timeout
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "image/jpeg", "User-Agent": HTTP_USER_AGENT}
        if self.api_key:
            headers[self.api_key_header] = self.api_key
        return headers

    def _query(self, cardinal: CardinalSlice) -> DetectorResponse:
        body = encode_jpeg(cardinal.raster)
        started = time.perf_counter()
        with self._in_flight:
            try:
                raw = post_image(self.endpoint, body, self._headers(), self.timeout)
            except urllib.error.HTTPError as exc:
                if exc.code == 429:
                    raise RateLimited(f"{self.endpoint} rate limited the request") from exc
                if exc.code >= 500:
                    raise BackendUnavailable(f"{self.endpoint} answered HTTP {exc.code}") from exc
                raise DetectorError(
                    f"{self.endpoint} rejected the request: HTTP {exc.code}"
                ) from exc
            except (urllib.error.URLError, socket.timeout, ConnectionError) as exc:
                raise BackendUnavailable(f"{self.endpoint} unreachable: {exc}") from exc
        latency_ms = (time.perf_counter() - started) * 1000.0
        detections = self._parse(raw, cardinal)
        logger.debug(
            "detector=http slice=%s detections=%d latency_ms=%.1f",
            cardinal.file_stem,
            len(detections),
            latency_ms,
        )
        return DetectorResponse(
            detections=tuple(detections), latency_ms=latency_ms, raw_payload=raw
        )

    def _parse(self, raw: bytes, cardinal: CardinalSlice) -> List[Detection]:
        size = cardinal.size
        try:
            boxes = MAPPERS[self.mapper_name](json.loads(raw.decode("utf-8")), size)
            detections = []
            for box in boxes:
                x_min, y_min, x_max, y_max = (_clip(float(v), size) for v in box["bbox"])
                detections.append(
                    Detection(
                        capture_ref=cardinal.capture_id,
                        cardinal_index=cardinal.cardinal_index,
                        object_class=normalize_object_class(str(box["class"])),
                        bbox=(x_min, y_min, x_max, y_max),
                        confidence=float(box["score"]),
                        slice_size=size,
                    )
                )
        except (UnicodeDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(
                f"{self.endpoint}: unreadable reply for {cardinal.file_stem}: {exc}",
                payload=raw,
            ) from exc
        return detections
