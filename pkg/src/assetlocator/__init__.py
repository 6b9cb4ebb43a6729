"""
AssetLocator core package.
"""

from .cluster import ClusterParams, cluster_observations
from .configuration import AppConfig, load_config
from .models import (
    BearingObservation,
    CompassBearing,
    Detection,
    GeoPoint,
    ObjectEstimate,
    PhotoCapture,
    ProjectedPoint,
)
from .triangulate import intersect

__all__ = [
    "AppConfig",
    "BearingObservation",
    "ClusterParams",
    "CompassBearing",
    "Detection",
    "GeoPoint",
    "ObjectEstimate",
    "PhotoCapture",
    "ProjectedPoint",
    "cluster_observations",
    "intersect",
    "load_config",
]

__version__ = "1.0.0"
