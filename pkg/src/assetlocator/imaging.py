"""
Photosphere raster handling.

An equirectangular photosphere is cropped to its functional band (a
horizontal strip around the vertical centre), cut into eight cardinal
slices, and every pixel column is mapped to a compass bearing. Column 0
looks along the capture heading; bearings grow clockwise with the column.

Angular buckets are half-open `[low, high)` everywhere, so a bearing on a
printed boundary belongs to the upper bucket.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Mapping, Optional, Tuple, Union

import numpy as np
from PIL import Image

from .geodesy import bearing_add
from .models import CompassBearing

DEFAULT_WIDTH = 8000
DEFAULT_HEIGHT = 4000
DEFAULT_BAND = (1500, 2500)
DEFAULT_CARDINAL_COUNT = 8
JPEG_QUALITY = 90


class DimensionMismatch(ValueError):
    """Raster dimensions do not match the imaging configuration."""


class ColumnOutOfRange(ValueError):
    """Pixel column outside `[0, width)`."""


@dataclass(frozen=True)
class ImagingConfig:
    """Raster geometry of the photospheres of one dataset.

    `degrees_per_pixel` is derived as 360 / width (0.045 for the 8000-pixel
    source format). The functional band must be exactly one cardinal width
    tall so every slice is square. `strict` additionally pins the source
    format of 8000 x 4000.
    """

    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    band_top: int = DEFAULT_BAND[0]
    band_bottom: int = DEFAULT_BAND[1]
    cardinal_count: int = DEFAULT_CARDINAL_COUNT
    strict: bool = False

    def __post_init__(self) -> None:
        if self.cardinal_count < 1:
            raise ValueError("cardinal_count must be positive")
        if self.width < self.cardinal_count or self.width % self.cardinal_count:
            raise ValueError(
                f"width {self.width} must be a positive multiple of {self.cardinal_count}"
            )
        if not 0 <= self.band_top < self.band_bottom <= self.height:
            raise ValueError(
                f"functional band ({self.band_top}, {self.band_bottom}) outside height "
                f"{self.height}"
            )
        if self.band_bottom - self.band_top != self.cardinal_width:
            raise ValueError(
                f"functional band height {self.band_bottom - self.band_top} must equal the "
                f"cardinal width {self.cardinal_width}"
            )
        if self.strict and (self.width, self.height) != (DEFAULT_WIDTH, DEFAULT_HEIGHT):
            raise ValueError(
                f"strict mode expects {DEFAULT_WIDTH}x{DEFAULT_HEIGHT} photospheres, "
                f"got {self.width}x{self.height}"
            )

    @property
    def degrees_per_pixel(self) -> float:
        return 360.0 / self.width

    @property
    def cardinal_width(self) -> int:
        return self.width // self.cardinal_count

    @property
    def cardinal_span(self) -> float:
        """Azimuth covered by one slice in degrees (45 for eight slices)."""
        return 360.0 / self.cardinal_count

    @classmethod
    def for_width(cls, width: int, cardinal_count: int = DEFAULT_CARDINAL_COUNT) -> "ImagingConfig":
        """Scaled-down geometry keeping the 2:1 aspect and a centred band."""
        height = width // 2
        cardinal_width = width // cardinal_count
        top = (height - cardinal_width) // 2
        return cls(
            width=width,
            height=height,
            band_top=top,
            band_bottom=top + cardinal_width,
            cardinal_count=cardinal_count,
        )

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "ImagingConfig":
        data = data or {}
        if "width" in data and "band_top" not in data:
            scaled = cls.for_width(int(data["width"]), int(data.get("cardinal_count", 8)))
            return cls(
                width=scaled.width,
                height=int(data.get("height", scaled.height)),
                band_top=scaled.band_top,
                band_bottom=scaled.band_bottom,
                cardinal_count=scaled.cardinal_count,
                strict=bool(data.get("strict", False)),
            )
        return cls(
            width=int(data.get("width", DEFAULT_WIDTH)),
            height=int(data.get("height", DEFAULT_HEIGHT)),
            band_top=int(data.get("band_top", DEFAULT_BAND[0])),
            band_bottom=int(data.get("band_bottom", DEFAULT_BAND[1])),
            cardinal_count=int(data.get("cardinal_count", DEFAULT_CARDINAL_COUNT)),
            strict=bool(data.get("strict", False)),
        )


# ---------------------------------------------------------------------------
# Direction lookup tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionalClass:
    """One of the 32 named 11.25-degree azimuth buckets (D1..D32)."""

    index: int
    code: str
    description: str
    low: float
    high: float

    @property
    def id(self) -> str:
        return f"D{self.index}"

    def contains(self, bearing: CompassBearing) -> bool:
        value = bearing.degrees
        if self.low > self.high:
            return value >= self.low or value < self.high
        return self.low <= value < self.high


@dataclass(frozen=True)
class NominalCardinal:
    """One of the eight 45-degree buckets measured from true north (C1..C8)."""

    index: int
    code: str
    description: str
    low: float
    high: float

    @property
    def id(self) -> str:
        return f"C{self.index}"


_DIRECTIONAL_NAMES: Tuple[Tuple[str, str], ...] = (
    ("N", "North"),
    ("NbE", "North by East"),
    ("NNE", "North Northeast"),
    ("NEbN", "Northeast by North"),
    ("NE", "Northeast"),
    ("NEbE", "Northeast by East"),
    ("ENE", "East Northeast"),
    ("EbN", "East by North"),
    ("E", "East"),
    ("EbS", "East by South"),
    ("ESE", "East Southeast"),
    ("SEbE", "Southeast by East"),
    ("SE", "Southeast"),
    ("SEbS", "Southeast by South"),
    ("SSE", "South Southeast"),
    ("SbE", "South by East"),
    ("S", "South"),
    ("SbW", "South by West"),
    ("SSW", "South Southwest"),
    ("SWbS", "Southwest by South"),
    ("SW", "Southwest"),
    ("SWbW", "Southwest by West"),
    ("WSW", "West Southwest"),
    ("WbS", "West by South"),
    ("W", "West"),
    ("WbN", "West by North"),
    ("WNW", "West Northwest"),
    ("NWbW", "Northwest by West"),
    ("NW", "Northwest"),
    ("NWbN", "Northwest by North"),
    ("NNW", "North Northwest"),
    ("NbW", "North by West"),
)

DIRECTIONAL_WIDTH = 11.25
DIRECTIONAL_CLASSES: Tuple[DirectionalClass, ...] = tuple(
    DirectionalClass(
        index=idx + 1,
        code=code,
        description=description,
        low=(idx * DIRECTIONAL_WIDTH - DIRECTIONAL_WIDTH / 2) % 360.0,
        high=idx * DIRECTIONAL_WIDTH + DIRECTIONAL_WIDTH / 2,
    )
    for idx, (code, description) in enumerate(_DIRECTIONAL_NAMES)
)

# Printed as-is, including the NNE label on the 0-45 bucket.
NOMINAL_CARDINALS: Tuple[NominalCardinal, ...] = tuple(
    NominalCardinal(index=idx + 1, code=code, description=description, low=idx * 45.0,
                    high=(idx + 1) * 45.0)
    for idx, (code, description) in enumerate(
        (
            ("NNE", "North Northeast"),
            ("ENE", "East Northeast"),
            ("ESE", "East Southeast"),
            ("SSE", "South Southeast"),
            ("SSW", "South Southwest"),
            ("WSW", "West Southwest"),
            ("WNW", "West Northwest"),
            ("NNW", "North Northwest"),
        )
    )
)


def classify_directional(bearing: CompassBearing) -> DirectionalClass:
    """Lookup into the 32 directional classes; D1 wraps through north."""
    shifted = (bearing.degrees + DIRECTIONAL_WIDTH / 2) % 360.0
    index = int(math.floor(shifted / DIRECTIONAL_WIDTH)) % len(DIRECTIONAL_CLASSES)
    return DIRECTIONAL_CLASSES[index]


def classify_nominal(bearing: CompassBearing) -> NominalCardinal:
    index = int(math.floor(bearing.degrees / 45.0)) % len(NOMINAL_CARDINALS)
    return NOMINAL_CARDINALS[index]


# ---------------------------------------------------------------------------
# Rasters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Photosphere:
    """A full equirectangular capture held as a row-major RGB array."""

    image_id: str
    pixels: np.ndarray
    capture_ref: str = ""

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class CardinalSlice:
    """One square cardinal sub-image and its direction metadata."""

    parent_id: str
    cardinal_index: int
    raster: np.ndarray
    center_bearing: CompassBearing
    directional_class: DirectionalClass
    capture_ref: str = ""

    @property
    def capture_id(self) -> str:
        return self.capture_ref or self.parent_id

    @property
    def file_stem(self) -> str:
        return cardinal_stem(self.parent_id, self.cardinal_index, self.directional_class)

    @property
    def size(self) -> int:
        return int(self.raster.shape[1])


def cardinal_stem(image_id: str, cardinal_index: int, directional: DirectionalClass) -> str:
    """Artifact naming convention: `<image_id>_C<i>_<Dcode>`."""
    return f"{image_id}_C{cardinal_index}_{directional.id}"


def crop_functional(photosphere: Photosphere, cfg: ImagingConfig) -> np.ndarray:
    """Rows `[band_top, band_bottom)` of every column, without resampling."""
    if photosphere.height < cfg.band_bottom:
        raise DimensionMismatch(
            f"{photosphere.image_id}: height {photosphere.height} is smaller than the "
            f"functional band bottom row {cfg.band_bottom}"
        )
    if photosphere.width != cfg.width:
        raise DimensionMismatch(
            f"{photosphere.image_id}: width {photosphere.width} does not match the "
            f"configured width {cfg.width}"
        )
    return photosphere.pixels[cfg.band_top : cfg.band_bottom]


def cardinal_centers(heading: CompassBearing, cfg: ImagingConfig) -> List[CompassBearing]:
    """First centre at heading + half a slice, then one slice per step."""
    centers = [bearing_add(heading, cfg.cardinal_span / 2.0)]
    for _ in range(1, cfg.cardinal_count):
        centers.append(bearing_add(centers[-1], cfg.cardinal_span))
    return centers


def slice_cardinals(
    band: np.ndarray,
    heading: CompassBearing,
    cfg: ImagingConfig,
    parent_id: str = "",
    capture_ref: str = "",
) -> List[CardinalSlice]:
    """Cut the functional band into `cardinal_count` square slices, left to right."""
    if band.ndim < 2:
        raise DimensionMismatch("functional band must be a 2-D or 3-D raster")
    band_width = int(band.shape[1])
    if band_width % cfg.cardinal_count or band_width != cfg.width:
        raise DimensionMismatch(
            f"band width {band_width} is not {cfg.cardinal_count} slices of "
            f"{cfg.cardinal_width} pixels"
        )
    width = cfg.cardinal_width
    slices = []
    for offset, center in enumerate(cardinal_centers(heading, cfg)):
        slices.append(
            CardinalSlice(
                parent_id=parent_id,
                cardinal_index=offset + 1,
                raster=band[:, offset * width : (offset + 1) * width],
                center_bearing=center,
                directional_class=classify_directional(center),
                capture_ref=capture_ref,
            )
        )
    return slices


def pixel_bearing(heading: CompassBearing, column: float, cfg: ImagingConfig) -> CompassBearing:
    """Line-of-sight bearing of a (possibly fractional) global column."""
    if not 0 <= column < cfg.width:
        raise ColumnOutOfRange(f"column {column} outside [0, {cfg.width})")
    return CompassBearing(heading.degrees + column * cfg.degrees_per_pixel)


def bearing_column(heading: CompassBearing, bearing: CompassBearing, cfg: ImagingConfig) -> float:
    """Inverse of `pixel_bearing`: fractional global column looking at `bearing`."""
    relative = (bearing.degrees - heading.degrees) % 360.0
    column = relative / cfg.degrees_per_pixel
    return min(column, math.nextafter(float(cfg.width), 0.0))


def load_photosphere(path: Union[str, Path], image_id: str, capture_ref: str = "") -> Photosphere:
    """Decode a JPEG/PNG photosphere into an RGB array."""
    with Image.open(path) as image:
        pixels = np.asarray(image.convert("RGB"))
    return Photosphere(image_id=image_id, pixels=pixels, capture_ref=capture_ref)


def placeholder_photosphere(
    cfg: ImagingConfig,
    image_id: str,
    capture_ref: str = "",
    color: Tuple[int, int, int] = (96, 96, 96),
) -> Photosphere:
    """Flat-coloured stand-in raster for datasets driven by the mock detector."""
    pixels = np.empty((cfg.height, cfg.width, 3), dtype=np.uint8)
    pixels[...] = color
    return Photosphere(image_id=image_id, pixels=pixels, capture_ref=capture_ref)


def encode_jpeg(raster: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(raster)).save(buffer, format="JPEG", quality=JPEG_QUALITY)
    return buffer.getvalue()
