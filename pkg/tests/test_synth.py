import pytest

from conftest import sandboxed_paths
from assetlocator.detectors import bbox_to_bearing
from assetlocator.detectors.mock import load_ground_truth
from assetlocator.geodesy import bearing_between, signed_difference
from assetlocator.imaging import ImagingConfig
from assetlocator.models import FIRE_HYDRANT, STOP_SIGN
from assetlocator.synth import (
    InvalidSpec,
    SceneSpec,
    generate,
    load_planted_objects,
    run_accuracy_experiment,
    scene_detections,
    split_object_count,
    write_scene,
)
from assetlocator.track import ingest_track

SMALL = ImagingConfig.for_width(800)


def _scene(**overrides):
    return generate(SceneSpec.from_mapping(overrides), dataset_id="s", imaging=SMALL)


def test_default_scene_is_a_straight_northbound_drive():
    scene = _scene()
    assert len(scene.track) == 200
    assert scene.track[0].capture_id == "s_00000"
    assert [o.object_class for o in scene.objects].count(STOP_SIGN) == 5
    assert [o.object_class for o in scene.objects].count(FIRE_HYDRANT) == 2
    # Northbound travel: the corrected heading points back down the track.
    for capture in scene.track:
        assert capture.heading.degrees == pytest.approx(180.0, abs=1e-6)


def test_same_seed_gives_the_same_scene_and_detections():
    first = _scene(seed=9)
    second = _scene(seed=9)
    assert first.track == second.track
    assert first.objects == second.objects
    assert scene_detections(first) == scene_detections(second)
    assert _scene(seed=10).objects != first.objects


def test_curved_segments_turn_the_track():
    scene = _scene(
        segments=[{"length_ft": 800}, {"length_ft": 400, "turn_deg": 90}, {"length_ft": 800}],
        objects={"stop_sign": 3},
    )
    assert len(scene.track) == 201
    assert scene.track[0].heading.degrees == pytest.approx(180.0, abs=1e-6)
    assert scene.track[-1].heading.degrees == pytest.approx(270.0, abs=1e-6)


def test_scene_without_objects_detects_nothing():
    scene = _scene(objects={})
    assert scene.objects == ()
    assert all(detections == [] for detections in scene_detections(scene).values())


def test_detections_point_exactly_at_their_objects():
    scene = _scene(seed=4)
    seen = 0
    for capture in scene.track:
        for detection in scene_detections(scene)[capture.capture_id]:
            bearing = bbox_to_bearing(detection, None, capture.heading, SMALL)
            misses = [
                abs(signed_difference(bearing, bearing_between(capture.projected, o.position)))
                for o in scene.objects
                if o.object_class == detection.object_class
            ]
            assert min(misses) < 1e-6
            seen += 1
    assert seen > 2 * len(scene.objects)


def test_noisy_tracks_render_against_the_true_camera_orientation():
    scene = _scene(seed=4, position_sd=0.3)
    assert any(
        abs(signed_difference(capture.heading, true_heading)) > 0.1
        for capture, true_heading in zip(scene.track, scene.true_headings)
    )
    for capture in scene.track:
        true_heading = scene.true_headings[capture.sequence_index]
        camera = scene.true_positions[capture.sequence_index]
        for detection in scene_detections(scene)[capture.capture_id]:
            bearing = bbox_to_bearing(detection, None, true_heading, SMALL)
            misses = [
                abs(signed_difference(bearing, bearing_between(camera, o.position)))
                for o in scene.objects
                if o.object_class == detection.object_class
            ]
            assert min(misses) < 1e-6


def test_objects_outside_the_heading_hemisphere_are_not_reported():
    scene = _scene(seed=4)
    detections = scene_detections(scene)
    for capture in scene.track:
        for detection in detections[capture.capture_id]:
            bearing = bbox_to_bearing(detection, None, capture.heading, SMALL)
            assert abs(signed_difference(bearing, capture.heading)) < 90.0


def test_quantised_noisy_scene_still_generates():
    scene = _scene(bearing_sd=0.045, position_sd=0.1, quantize=True)
    assert len(scene.objects) == 7
    assert sum(len(d) for d in scene_detections(scene).values()) > 0


def test_written_scene_reingests_to_the_same_track(tmp_path):
    scene = _scene(seed=2)
    paths = sandboxed_paths(tmp_path, "s")
    write_scene(scene, paths)

    captures = ingest_track(paths.track_path, "s")
    assert [c.capture_id for c in captures] == [c.capture_id for c in scene.track]
    for ingested, generated in zip(captures, scene.track):
        assert ingested.heading == generated.heading
        assert ingested.position == generated.position
        assert ingested.projected.easting == pytest.approx(generated.projected.easting, abs=1e-9)
        assert ingested.projected.northing == pytest.approx(
            generated.projected.northing, abs=1e-9
        )

    assert load_ground_truth(paths.ground_truth_path) == scene_detections(scene)
    planted = load_planted_objects(paths)
    assert [p.object_id for p in planted] == [o.object_id for o in scene.objects]
    assert planted[0].position == scene.objects[0].position


@pytest.mark.parametrize(
    "overrides",
    [
        {"step_ft": 0},
        {"heading_mode": "sideways"},
        {"lateral_offset": [40, 25]},
        {"segments": [{"turn_deg": 3}]},
        {"objects": {"stop_sign": -1}},
        {"confidence": 1.5},
    ],
)
def test_invalid_scene_specs_are_rejected(overrides):
    with pytest.raises(InvalidSpec):
        SceneSpec.from_mapping(overrides)


def test_too_many_objects_for_the_track_is_rejected():
    with pytest.raises(InvalidSpec, match="cannot hold"):
        _scene(objects={"stop_sign": 50})


def test_split_object_count():
    assert split_object_count(5) == {STOP_SIGN: 4, FIRE_HYDRANT: 1}
    assert split_object_count(0) == {STOP_SIGN: 0, FIRE_HYDRANT: 0}
    with pytest.raises(InvalidSpec):
        split_object_count(-1)


# ---------------------------------------------------------------------------
# Monte-Carlo accuracy experiment
# ---------------------------------------------------------------------------



def test_monte_carlo_sigmas_land_between_a_hundred_thousandth_and_a_ten_thousandth():
    result = run_accuracy_experiment(100, seed=0)
    assert len(result.estimates) + result.failed == 100
    assert len(result.estimates) >= 95
    assert 1e-5 <= result.mean_sigma_lat <= 1e-4
    assert 1e-5 <= result.mean_sigma_lon <= 1e-4
    assert result.mean_error_ft < 15.0


def test_noise_free_drive_bys_are_recovered_exactly():
    result = run_accuracy_experiment(
        20, seed=1, bearing_sd=0.0, position_sd=0.0, quantize=False
    )
    assert result.failed == 0
    assert result.mean_error_ft < 1e-4


def test_heading_noise_from_the_track_dominates_the_spread():
    bearings_only = run_accuracy_experiment(20, seed=1, position_sd=0.0)
    with_track_noise = run_accuracy_experiment(20, seed=1)
    assert with_track_noise.mean_sigma_lat > 5 * bearings_only.mean_sigma_lat
    assert with_track_noise.mean_sigma_lon > 5 * bearings_only.mean_sigma_lon
    assert with_track_noise.mean_error_ft > bearings_only.mean_error_ft


def test_monte_carlo_needs_objects():
    with pytest.raises(InvalidSpec):
        run_accuracy_experiment(0)


def test_monte_carlo_counts_trials_with_a_single_sighting_as_failed():
    # A 12 ft range only reaches the capture abeam of the object.
    result = run_accuracy_experiment(5, seed=2, max_range=12.0, lateral_offset=(10.0, 11.0))
    assert result.estimates == ()
    assert result.failed == 5
