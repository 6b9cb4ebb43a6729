import csv
import math
import random
from typing import List, Set

import numpy as np
import pytest

from conftest import FIXTURES, make_observation
from assetlocator.cluster import (
    NOISE,
    ClusterGroup,
    ClusterParams,
    NoValidPairs,
    cluster_observations,
    dbscan,
    estimate_cluster,
    seed_points,
)
from assetlocator.geodesy import project
from assetlocator.models import (
    FIRE_HYDRANT,
    STOP_SIGN,
    BearingObservation,
    CompassBearing,
    GeoPoint,
    ProjectedPoint,
)


def test_cluster_params_validate_and_read_mappings() -> None:
    with pytest.raises(ValueError, match="eps"):
        ClusterParams(eps=0)
    with pytest.raises(ValueError, match="min_pts"):
        ClusterParams(min_pts=1)
    params = ClusterParams.from_mapping({"eps": "20", "min_pts": 3})
    assert (params.eps, params.min_pts, params.nominal_range) == (20.0, 3, 30.0)
    assert ClusterParams.from_mapping(None) == ClusterParams()


def test_seed_points_sit_nominal_range_along_each_ray() -> None:
    obs = make_observation(100.0, 100.0, 90.0)
    (seed,) = seed_points([obs], 30.0)
    assert seed.easting == pytest.approx(130.0)
    assert seed.northing == pytest.approx(100.0)


# ---------------------------------------------------------------------------
# DBSCAN against a brute-force reference
# ---------------------------------------------------------------------------


def _neighbours(points: List[ProjectedPoint], eps: float) -> List[Set[int]]:
    result = []
    for p in points:
        result.append(
            {
                j
                for j, q in enumerate(points)
                if math.hypot(p.easting - q.easting, p.northing - q.northing) <= eps
            }
        )
    return result


def _core_components(neighbours: List[Set[int]], min_pts: int) -> List[Set[int]]:
    core = {i for i, n in enumerate(neighbours) if len(n) >= min_pts}
    components: List[Set[int]] = []
    seen: Set[int] = set()
    for start in sorted(core):
        if start in seen:
            continue
        component = set()
        stack = [start]
        while stack:
            i = stack.pop()
            if i in component:
                continue
            component.add(i)
            stack.extend(j for j in neighbours[i] if j in core and j not in component)
        seen |= component
        components.append(component)
    return components


def _dbscan_instance(seed: int):
    """At most 50 points; lattice coordinates put many pairs exactly eps apart."""
    rng = np.random.default_rng(seed)
    lattice = rng.integers(0, 20, size=(int(rng.integers(1, 30)), 2)) * 3.0
    tie = lattice[:1] + np.array([9.0, 12.0])
    scattered = rng.uniform(0.0, 60.0, size=(int(rng.integers(0, 21)), 2))
    coords = np.vstack([lattice, tie, scattered])
    points = [ProjectedPoint(float(e), float(n)) for e, n in coords]
    return points, ClusterParams(eps=15.0, min_pts=int(rng.integers(2, 6)))


@pytest.mark.parametrize("seed", range(200))
def test_dbscan_agrees_with_brute_force_reference(seed: int) -> None:
    points, params = _dbscan_instance(seed)
    assert len(points) <= 50
    labels = dbscan(points, params)

    neighbours = _neighbours(points, params.eps)
    components = _core_components(neighbours, params.min_pts)
    core = set().union(*components) if components else set()

    # Core points: the partition must match connected components exactly.
    assert NOISE not in {labels[i] for i in core}
    for component in components:
        assert len({labels[i] for i in component}) == 1
    assert len({labels[next(iter(c))] for c in components}) == len(components)

    for i, label in enumerate(labels):
        if i in core:
            continue
        core_neighbours = neighbours[i] & core
        if core_neighbours:
            # Border point: joins the cluster of one of its core neighbours.
            assert label in {labels[j] for j in core_neighbours}
        else:
            assert label == NOISE


def test_dbscan_neighbourhood_includes_points_exactly_eps_away() -> None:
    points = [ProjectedPoint(x, 0.0) for x in (0.0, 15.0, 30.0, 45.5)]
    labels = dbscan(points, ClusterParams(eps=15.0, min_pts=2))
    assert labels[:3] == [0, 0, 0]
    assert labels[3] == NOISE


def test_dbscan_of_nothing_is_nothing() -> None:
    assert dbscan([], ClusterParams()) == []


# ---------------------------------------------------------------------------
# Cluster estimation
# ---------------------------------------------------------------------------


def _fan(target: ProjectedPoint, origins, object_class=STOP_SIGN, start=0):
    observations = []
    for offset, origin in enumerate(origins):
        bearing = math.degrees(
            math.atan2(target.easting - origin.easting, target.northing - origin.northing)
        )
        observations.append(
            make_observation(
                origin.easting,
                origin.northing,
                bearing,
                ref=f"{object_class}-{start + offset}",
                sequence_index=start + offset,
                object_class=object_class,
            )
        )
    return observations


def test_cluster_observations_locates_each_object_exactly_without_noise() -> None:
    track = [ProjectedPoint(6_000_000.0, 2_000_000.0 + 10.0 * i) for i in range(12)]
    sign = ProjectedPoint(6_000_030.0, 2_000_040.0)
    hydrant = ProjectedPoint(5_999_975.0, 2_000_070.0)
    observations = _fan(sign, track[:6]) + _fan(hydrant, track[5:], FIRE_HYDRANT, start=5)

    result = cluster_observations(observations, ClusterParams(), dataset_id="demo")

    assert [e.object_class for e in result.estimates] == [FIRE_HYDRANT, STOP_SIGN]
    assert [e.cluster_id for e in result.estimates] == [1, 2]
    located = {e.object_class: e for e in result.estimates}
    for object_class, truth in ((STOP_SIGN, sign), (FIRE_HYDRANT, hydrant)):
        estimate = located[object_class]
        assert estimate.dataset_id == "demo"
        assert estimate.support_detections == (6 if object_class == STOP_SIGN else 7)
        assert estimate.mean_projected.easting == pytest.approx(truth.easting, abs=1e-6)
        assert estimate.mean_projected.northing == pytest.approx(truth.northing, abs=1e-6)
        assert estimate.mean_drive_step == pytest.approx(10.0)
    assert result.noise == []
    assert result.clustered_count == len(observations)


def test_cluster_observations_is_invariant_to_input_order() -> None:
    track = [ProjectedPoint(6_000_000.0 + 9.0 * i, 2_000_000.0) for i in range(8)]
    observations = _fan(ProjectedPoint(6_000_040.0, 2_000_035.0), track)
    shuffled = list(observations)
    random.Random(4).shuffle(shuffled)
    first = cluster_observations(observations, ClusterParams())
    second = cluster_observations(shuffled, ClusterParams())
    assert first.estimates == second.estimates


def test_isolated_observations_are_noise() -> None:
    observations = [
        make_observation(0.0, 0.0, 0.0, ref="a"),
        make_observation(500.0, 0.0, 0.0, ref="b", sequence_index=1),
    ]
    result = cluster_observations(observations, ClusterParams())
    assert result.estimates == []
    assert [o.capture_ref for o in result.noise] == ["a", "b"]


def test_cluster_with_only_parallel_pairs_is_reported_unlocated() -> None:
    observations = [
        make_observation(0.0, 0.0, 0.0, ref="a"),
        make_observation(5.0, 0.0, 0.0, ref="b", sequence_index=1),
    ]
    result = cluster_observations(observations, ClusterParams())
    (estimate,) = result.estimates
    assert not estimate.located
    assert estimate.mean_projected is None
    assert estimate.support_detections == 2
    assert estimate.support_pairs == 0
    assert "discarded" in estimate.diagnostic
    assert result.discarded_pairs == 1

    with pytest.raises(NoValidPairs) as excinfo:
        estimate_cluster(ClusterGroup(1, STOP_SIGN, tuple(observations)), ClusterParams())
    assert excinfo.value.discarded == 1


def test_cluster_group_requires_two_members_of_one_class() -> None:
    a = make_observation(0.0, 0.0, 10.0, ref="a")
    with pytest.raises(ValueError, match="two members"):
        ClusterGroup(1, STOP_SIGN, (a,))
    b = make_observation(1.0, 0.0, 10.0, ref="b", object_class=FIRE_HYDRANT)
    with pytest.raises(ValueError, match="one object class"):
        ClusterGroup(1, STOP_SIGN, (a, b))


# ---------------------------------------------------------------------------
# Field examples
# ---------------------------------------------------------------------------


def _fixture_observations(
    name: str,
    lat: str,
    lon: str,
    bearing: str,
    confidence: str,
    *,
    west_positive: bool,
    object_class: str = STOP_SIGN,
) -> List[BearingObservation]:
    observations = []
    with (FIXTURES / name).open(newline="", encoding="utf-8") as handle:
        for index, row in enumerate(csv.DictReader(handle)):
            longitude = float(row[lon])
            geo = GeoPoint(float(row[lat]), -longitude if west_positive else longitude)
            origin = project(geo)
            observations.append(
                BearingObservation(
                    origin=origin,
                    bearing=CompassBearing(float(row[bearing])),
                    capture_ref=f"r{index + 1}",
                    object_class=object_class,
                    confidence=float(row[confidence]),
                    sequence_index=index,
                )
            )
    return observations


def test_stop_sign_sightings_form_one_cluster_near_the_reported_mean() -> None:
    observations = _fixture_observations(
        "stop_sign_track.csv",
        "latitude",
        "longitude",
        "object_bearing",
        "confidence",
        west_positive=False,
    )
    result = cluster_observations(observations, ClusterParams())
    (estimate,) = result.estimates
    assert estimate.support_detections == 6
    assert estimate.support_pairs == 15
    assert result.discarded_pairs == 0
    assert estimate.mean_position.latitude == pytest.approx(33.814494, abs=2e-6)
    assert estimate.mean_position.longitude == pytest.approx(-117.967471, abs=2e-6)
    # Sample spread of the fifteen pair intersections.
    assert estimate.sigma_lat == pytest.approx(1.67e-6, rel=0.02)
    assert estimate.sigma_lon == pytest.approx(3.43e-6, rel=0.02)
    assert 0.0 < estimate.mean_object_distance < 150.0


def test_hydrant_sightings_drop_the_narrow_pair() -> None:
    observations = _fixture_observations(
        "hydrant_track_applanix.csv",
        "Latitude",
        "Longitude",
        "ObjectBearing",
        "Confidence",
        west_positive=True,
        object_class=FIRE_HYDRANT,
    )
    result = cluster_observations(observations, ClusterParams())
    (estimate,) = result.estimates
    assert estimate.support_detections == 4
    # The first two bearings are less than a degree apart.
    assert result.discarded_pairs == 1
    assert estimate.support_pairs == 5
    assert estimate.mean_position.latitude == pytest.approx(33.77132, abs=5e-4)
    assert estimate.mean_position.longitude == pytest.approx(-117.8137, abs=5e-4)
