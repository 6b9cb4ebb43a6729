"""
Group bearing observations into physical objects and average their pairs.

Each observation is seeded as the point `nominal_range` feet along its ray;
DBSCAN on those seeds (per object class) yields detection groups. Every
group is then triangulated pairwise and the retained intersections are
averaged into one `ObjectEstimate`.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import DBSCAN

from .geodesy import unproject_many
from .models import (
    BearingObservation,
    GeoPoint,
    ObjectEstimate,
    PairIntersection,
    ProjectedPoint,
)
from .triangulate import (
    DEFAULT_MIN_SEPARATION,
    DEFAULT_VERTICAL_EPSILON,
    TriangulationError,
    intersect,
    ray_distance,
)

logger = logging.getLogger(__name__)

NOISE = -1


class NoValidPairs(ValueError):
    """Every pair in a cluster was discarded; no position can be estimated."""

    def __init__(self, message: str, *, discarded: int = 0) -> None:
        super().__init__(message)
        self.discarded = discarded


@dataclass(frozen=True)
class ClusterParams:
    """Clustering and pair-filtering thresholds (distances in feet)."""

    eps: float = 15.0
    min_pts: int = 2
    min_separation: float = DEFAULT_MIN_SEPARATION
    max_detection_range: float = 150.0
    nominal_range: float = 30.0
    vertical_epsilon: float = DEFAULT_VERTICAL_EPSILON

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 2:
            raise ValueError("min_pts must be at least 2")
        if self.min_separation < 0:
            raise ValueError("min_separation must be non-negative")
        if not self.max_detection_range > 0:
            raise ValueError("max_detection_range must be positive")
        if not self.nominal_range > 0:
            raise ValueError("nominal_range must be positive")

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "ClusterParams":
        data = data or {}
        defaults = cls()
        return cls(
            eps=float(data.get("eps", defaults.eps)),
            min_pts=int(data.get("min_pts", defaults.min_pts)),
            min_separation=float(data.get("min_separation", defaults.min_separation)),
            max_detection_range=float(
                data.get("max_detection_range", defaults.max_detection_range)
            ),
            nominal_range=float(data.get("nominal_range", defaults.nominal_range)),
            vertical_epsilon=float(data.get("vertical_epsilon", defaults.vertical_epsilon)),
        )


@dataclass(frozen=True)
class ClusterGroup:
    cluster_id: int
    object_class: str
    members: Tuple[BearingObservation, ...]
    pair_results: Tuple[PairIntersection, ...] = ()
    discarded_pairs: int = 0

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("a cluster needs at least two members")
        if any(m.object_class != self.object_class for m in self.members):
            raise ValueError("cluster members must share one object class")


@dataclass
class ClusteringResult:
    """Everything one clustering pass produced, for reporting and audit."""

    groups: List[ClusterGroup] = field(default_factory=list)
    estimates: List[ObjectEstimate] = field(default_factory=list)
    noise: List[BearingObservation] = field(default_factory=list)

    @property
    def clustered_count(self) -> int:
        return sum(len(group.members) for group in self.groups)

    @property
    def retained_pairs(self) -> int:
        return sum(len(group.pair_results) for group in self.groups)

    @property
    def discarded_pairs(self) -> int:
        return sum(group.discarded_pairs for group in self.groups)


# ---------------------------------------------------------------------------
# Seeding and DBSCAN
# ---------------------------------------------------------------------------


def seed_points(
    observations: Sequence[BearingObservation], nominal_range: float
) -> List[ProjectedPoint]:
    if not nominal_range > 0:
        raise ValueError("nominal_range must be positive")
    return [
        obs.origin.offset(
            nominal_range * math.sin(obs.bearing.radians),
            nominal_range * math.cos(obs.bearing.radians),
        )
        for obs in observations
    ]


def dbscan(points: Sequence[ProjectedPoint], params: ClusterParams) -> List[int]:
    """Label each point with a cluster id (0-based) or -1 for noise.

    A point is core when at least `min_pts` points, itself included, lie at
    distance <= eps. Labels follow the input order of the first core point
    reached, so identical inputs always give identical labels.
    """
    if not points:
        return []
    coords = np.array([[p.easting, p.northing] for p in points], dtype=float)
    model = DBSCAN(eps=params.eps, min_samples=params.min_pts, algorithm="kd_tree")
    return [int(label) for label in model.fit_predict(coords)]


# ---------------------------------------------------------------------------
# Pairwise estimation
# ---------------------------------------------------------------------------


def _member_key(obs: BearingObservation) -> tuple:
    return (obs.sequence_index, obs.capture_ref, obs.bearing.degrees)


def _sample_sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float), ddof=1))


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(np.asarray(values, dtype=float))) if values else 0.0


def pair_intersections(
    members: Sequence[BearingObservation], params: ClusterParams
) -> Tuple[List[PairIntersection], int]:
    """Intersect every member pair; returns (retained, discarded count)."""
    retained: List[PairIntersection] = []
    discarded = 0
    for a, b in itertools.combinations(members, 2):
        try:
            retained.append(
                intersect(
                    a,
                    b,
                    min_separation=params.min_separation,
                    vertical_epsilon=params.vertical_epsilon,
                )
            )
        except TriangulationError as exc:
            discarded += 1
            logger.debug(
                "pair=%s/%s discarded reason=%s detail=%r",
                a.capture_ref,
                b.capture_ref,
                type(exc).__name__,
                str(exc),
            )
    return retained, discarded


def _drive_steps(members: Sequence[BearingObservation]) -> List[float]:
    return [ray_distance(a.origin, b.origin) for a, b in zip(members, members[1:])]


def _best_directional_code(members: Sequence[BearingObservation]) -> str:
    best = min(members, key=lambda m: (-m.confidence, m.sequence_index, m.capture_ref))
    return best.directional_code


def _summarize(
    group: ClusterGroup, dataset_id: str = ""
) -> ObjectEstimate:
    members = group.members
    pairs = group.pair_results
    if not pairs:
        raise NoValidPairs(
            f"cluster {group.cluster_id} ({group.object_class}): all "
            f"{group.discarded_pairs} pairs discarded",
            discarded=group.discarded_pairs,
        )
    eastings = np.array([p.position.easting for p in pairs], dtype=float)
    northings = np.array([p.position.northing for p in pairs], dtype=float)
    latitudes, longitudes = unproject_many(eastings, northings)
    altitudes = [m.altitude for m in members if m.altitude is not None]
    distances = [d for p in pairs for d in (p.dist_a, p.dist_b)]
    steps = _drive_steps(members)
    return ObjectEstimate(
        object_class=group.object_class,
        mean_position=GeoPoint(
            float(np.mean(latitudes)),
            float(np.mean(longitudes)),
            _mean(altitudes) if altitudes else None,
        ),
        mean_projected=ProjectedPoint(float(np.mean(eastings)), float(np.mean(northings))),
        sigma_lat=_sample_sd(latitudes.tolist()),
        sigma_lon=_sample_sd(longitudes.tolist()),
        support_detections=len(members),
        support_pairs=len(pairs),
        mean_object_distance=_mean(distances),
        sd_object_distance=_sample_sd(distances),
        mean_drive_step=_mean(steps),
        sd_drive_step=_sample_sd(steps),
        cluster_id=group.cluster_id,
        dataset_id=dataset_id,
        best_directional_code=_best_directional_code(members),
    )


def _with_pairs(group: ClusterGroup, params: ClusterParams) -> ClusterGroup:
    members = tuple(sorted(group.members, key=_member_key))
    pairs, discarded = pair_intersections(members, params)
    return replace(group, members=members, pair_results=tuple(pairs), discarded_pairs=discarded)


def estimate_cluster(
    group: ClusterGroup, params: ClusterParams, dataset_id: str = ""
) -> ObjectEstimate:
    """Combinatorial average over all member pairs of one cluster.

    Members are put in capture order first, so the result does not depend
    on the order they were supplied in. Raises `NoValidPairs` when every
    pair is discarded.
    """
    return _summarize(_with_pairs(group, params), dataset_id)


def unlocated_estimate(group: ClusterGroup, reason: str, dataset_id: str = "") -> ObjectEstimate:
    """Null-position estimate for a cluster whose pairs were all discarded."""
    steps = _drive_steps(group.members)
    return ObjectEstimate(
        object_class=group.object_class,
        mean_position=None,
        mean_projected=None,
        sigma_lat=0.0,
        sigma_lon=0.0,
        support_detections=len(group.members),
        support_pairs=0,
        mean_object_distance=0.0,
        sd_object_distance=0.0,
        mean_drive_step=_mean(steps),
        sd_drive_step=_sample_sd(steps),
        cluster_id=group.cluster_id,
        dataset_id=dataset_id,
        best_directional_code=_best_directional_code(group.members),
        diagnostic=reason,
    )


def cluster_observations(
    observations: Sequence[BearingObservation],
    params: ClusterParams,
    dataset_id: str = "",
) -> ClusteringResult:
    """Partition by class, cluster each partition, and estimate every cluster.

    Cluster ids are 1-based and run across classes in sorted class order.
    """
    by_class: Dict[str, List[BearingObservation]] = {}
    for obs in sorted(observations, key=_member_key):
        by_class.setdefault(obs.object_class, []).append(obs)

    result = ClusteringResult()
    next_id = 1
    for object_class in sorted(by_class):
        members = by_class[object_class]
        labels = dbscan(seed_points(members, params.nominal_range), params)
        clusters: Dict[int, List[BearingObservation]] = {}
        for obs, label in zip(members, labels):
            if label == NOISE:
                result.noise.append(obs)
            else:
                clusters.setdefault(label, []).append(obs)
        for label in sorted(clusters):
            group = _with_pairs(
                ClusterGroup(next_id, object_class, tuple(clusters[label])), params
            )
            next_id += 1
            result.groups.append(group)
            try:
                estimate = _summarize(group, dataset_id)
            except NoValidPairs as exc:
                logger.warning(
                    "cluster=%d class=%s members=%d unlocated reason=%r",
                    group.cluster_id,
                    object_class,
                    len(group.members),
                    str(exc),
                )
                estimate = unlocated_estimate(group, str(exc), dataset_id)
            result.estimates.append(estimate)
        logger.info(
            "class=%s observations=%d clusters=%d noise=%d",
            object_class,
            len(members),
            len(clusters),
            sum(1 for label in labels if label == NOISE),
        )
    return result
