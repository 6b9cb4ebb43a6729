"""
YAML configuration for assetlocator runs.

A single file describes where the data lives, how photospheres are laid
out, which detector to call and how to cluster. Example:

    root: .
    jobs: 4
    imaging: {width: 8000}
    detector: {backend: http, endpoint: "https://vision.example/detect", mapper: generic}
    cluster: {eps: 15, min_pts: 2}
    sensor: {gps_to_camera_offset: 3.28084, apply_lever_arm: false}
    datasets:
      - {id: 337p1, area: anaheim_hills, profile: applanix}

Relative paths resolve against the directory holding the config file. The
only environment override is `ASSETLOCATOR_API_KEY` for the detector key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

from .cluster import ClusterParams
from .imaging import ImagingConfig
from .models import FIRE_HYDRANT, STOP_SIGN, SensorLayout, normalize_object_class
from .storage import DatasetPaths
from .track import BUNDLED_PROFILES, DEFAULT_PROFILE, SIGN_CONVENTIONS, WEST_NEGATIVE, ColumnMap

API_KEY_ENV = "ASSETLOCATOR_API_KEY"
DEFAULT_JOBS = 4
DETECTOR_BACKENDS = ("mock", "http")

# Nominal physical widths (feet) used to turn bbox widths into ranges.
DEFAULT_OBJECT_WIDTHS: Dict[str, float] = {STOP_SIGN: 2.5, FIRE_HYDRANT: 1.5}
FALLBACK_OBJECT_WIDTH = 2.0


class ConfigError(ValueError):
    """Raised when a configuration file is missing, unreadable or invalid."""

    def __init__(self, message: str, *, key: Optional[str] = None) -> None:
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _section(data: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigError("expected a mapping", key=key)
    return value


def _parse_positive_int(raw: Any, key: str) -> int:
    try:
        value = int(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected an integer, got {raw!r}", key=key) from exc
    if value < 1:
        raise ConfigError("must be at least 1", key=key)
    return value


@dataclass(frozen=True)
class DetectorConfig:
    backend: str = "mock"
    endpoint: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    api_key_header: str = "X-API-Key"
    mapper: str = "generic"
    timeout: float = 30.0
    max_in_flight: int = 8
    min_confidence: float = 0.5
    attempts: int = 3
    backoff_seconds: float = 1.0
    all_cardinals: bool = False

    def __post_init__(self) -> None:
        if self.backend not in DETECTOR_BACKENDS:
            raise ConfigError(
                f"unknown backend '{self.backend}'; expected one of "
                f"{', '.join(DETECTOR_BACKENDS)}",
                key="detector.backend",
            )
        if self.backend == "http" and not self.endpoint:
            raise ConfigError("the http backend needs an endpoint", key="detector.endpoint")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError("must be between 0 and 1", key="detector.min_confidence")

    @classmethod
    def from_mapping(
        cls, data: Mapping[str, Any], env: Optional[Mapping[str, str]] = None
    ) -> "DetectorConfig":
        env = os.environ if env is None else env
        defaults = cls()
        api_key = env.get(API_KEY_ENV) or data.get("api_key")
        return cls(
            backend=str(data.get("backend", defaults.backend)),
            endpoint=data.get("endpoint"),
            api_key=str(api_key) if api_key else None,
            api_key_header=str(data.get("api_key_header", defaults.api_key_header)),
            mapper=str(data.get("mapper", defaults.mapper)),
            timeout=float(data.get("timeout", defaults.timeout)),
            max_in_flight=_parse_positive_int(
                data.get("max_in_flight", defaults.max_in_flight), "detector.max_in_flight"
            ),
            min_confidence=float(data.get("min_confidence", defaults.min_confidence)),
            attempts=_parse_positive_int(
                data.get("attempts", defaults.attempts), "detector.attempts"
            ),
            backoff_seconds=float(data.get("backoff_seconds", defaults.backoff_seconds)),
            all_cardinals=bool(data.get("all_cardinals", defaults.all_cardinals)),
        )


@dataclass(frozen=True)
class DatasetConfig:
    """One field-collection run and how to read it."""

    id: str
    area: str = ""
    track: Optional[Path] = None
    profile: str = DEFAULT_PROFILE
    longitude_convention: str = WEST_NEGATIVE
    delimiter: str = ","
    placeholder_rasters: bool = False
    all_cardinals: bool = False
    synthetic: Optional[Mapping[str, Any]] = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: Path) -> "DatasetConfig":
        if not isinstance(data, Mapping) or not data.get("id"):
            raise ConfigError("every dataset entry needs an 'id'", key="datasets")
        dataset_id = str(data["id"])
        key = f"datasets.{dataset_id}"
        convention = str(data.get("longitude_convention", WEST_NEGATIVE))
        if convention not in SIGN_CONVENTIONS:
            raise ConfigError(
                f"longitude_convention must be one of {', '.join(SIGN_CONVENTIONS)}", key=key
            )
        delimiter = str(data.get("delimiter", ","))
        if len(delimiter) != 1:
            raise ConfigError("delimiter must be a single character", key=key)
        synthetic = data.get("synthetic")
        if synthetic is not None and not isinstance(synthetic, Mapping):
            raise ConfigError("synthetic must be a mapping", key=key)
        track = data.get("track")
        return cls(
            id=dataset_id,
            area=str(data.get("area", "")),
            track=_resolve(base_dir, track) if track else None,
            profile=str(data.get("profile", DEFAULT_PROFILE)),
            longitude_convention=convention,
            delimiter=delimiter,
            placeholder_rasters=bool(data.get("placeholder_rasters", synthetic is not None)),
            all_cardinals=bool(data.get("all_cardinals", synthetic is not None)),
            synthetic=dict(synthetic) if synthetic is not None else None,
        )


def _resolve(base_dir: Path, raw: Union[str, Path]) -> Path:
    path = Path(raw).expanduser()
    return path if path.is_absolute() else base_dir / path


@dataclass(frozen=True)
class AppConfig:
    root: Path
    jobs: int = DEFAULT_JOBS
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    sensor: SensorLayout = field(default_factory=SensorLayout)
    object_widths: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_OBJECT_WIDTHS)
    )
    profiles: Mapping[str, ColumnMap] = field(default_factory=lambda: dict(BUNDLED_PROFILES))
    datasets: Tuple[DatasetConfig, ...] = ()
    source: Optional[Path] = None

    @classmethod
    def from_mapping(
        cls,
        data: Mapping[str, Any],
        *,
        base_dir: Path,
        env: Optional[Mapping[str, str]] = None,
    ) -> "AppConfig":
        try:
            imaging = ImagingConfig.from_mapping(_section(data, "imaging"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="imaging") from exc
        try:
            cluster = ClusterParams.from_mapping(_section(data, "cluster"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="cluster") from exc
        sensor_data = _section(data, "sensor")
        try:
            sensor = SensorLayout(
                gps_to_camera_offset=float(
                    sensor_data.get("gps_to_camera_offset", SensorLayout.gps_to_camera_offset)
                ),
                apply_lever_arm=bool(sensor_data.get("apply_lever_arm", False)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="sensor") from exc
        try:
            detector = DetectorConfig.from_mapping(_section(data, "detector"), env)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="detector") from exc

        widths = dict(DEFAULT_OBJECT_WIDTHS)
        for raw_class, raw_width in _section(data, "object_widths").items():
            try:
                width = float(raw_width)
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"expected a width in feet, got {raw_width!r}",
                    key=f"object_widths.{raw_class}",
                ) from exc
            if width <= 0:
                raise ConfigError("widths must be positive", key=f"object_widths.{raw_class}")
            widths[normalize_object_class(str(raw_class))] = width

        profiles = dict(BUNDLED_PROFILES)
        for name, mapping in _section(data, "profiles").items():
            if not isinstance(mapping, Mapping):
                raise ConfigError("expected a column mapping", key=f"profiles.{name}")
            try:
                profiles[str(name)] = ColumnMap.from_mapping(mapping)
            except ValueError as exc:
                raise ConfigError(str(exc), key=f"profiles.{name}") from exc

        raw_datasets = data.get("datasets") or []
        if not isinstance(raw_datasets, list):
            raise ConfigError("expected a list", key="datasets")
        datasets: List[DatasetConfig] = []
        for entry in raw_datasets:
            dataset = DatasetConfig.from_mapping(entry, base_dir)
            if any(existing.id == dataset.id for existing in datasets):
                raise ConfigError("duplicate dataset id", key=f"datasets.{dataset.id}")
            if dataset.profile not in profiles:
                raise ConfigError(
                    f"unknown profile '{dataset.profile}'", key=f"datasets.{dataset.id}"
                )
            datasets.append(dataset)

        return cls(
            root=_resolve(base_dir, data.get("root", ".")),
            jobs=_parse_positive_int(data.get("jobs", DEFAULT_JOBS), "jobs"),
            imaging=imaging,
            detector=detector,
            cluster=cluster,
            sensor=sensor,
            object_widths=widths,
            profiles=profiles,
            datasets=tuple(datasets),
        )

    def dataset(self, dataset_id: str) -> DatasetConfig:
        for dataset in self.datasets:
            if dataset.id == dataset_id:
                return dataset
        known = ", ".join(d.id for d in self.datasets) or "none"
        raise ConfigError(f"unknown dataset '{dataset_id}' (configured: {known})", key="datasets")

    def select(self, dataset_ids: Optional[List[str]] = None) -> List[DatasetConfig]:
        if not dataset_ids:
            return list(self.datasets)
        return [self.dataset(dataset_id) for dataset_id in dataset_ids]

    def paths_for(self, dataset: DatasetConfig) -> DatasetPaths:
        return DatasetPaths.for_dataset(dataset.id, root=self.root, track_path=dataset.track)

    def column_map(self, dataset: DatasetConfig) -> ColumnMap:
        return self.profiles[dataset.profile]

    def object_width(self, object_class: str) -> float:
        return self.object_widths.get(object_class, FALLBACK_OBJECT_WIDTH)


def load_config(
    path: Union[str, Path], env: Optional[Mapping[str, str]] = None
) -> AppConfig:
    """Read and validate a YAML config file."""
    config_path = Path(path)
    try:
        with open(config_path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {config_path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{config_path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{config_path} must contain a mapping at the top level")
    config = AppConfig.from_mapping(data, base_dir=config_path.resolve().parent, env=env)
    return replace(config, source=config_path)
