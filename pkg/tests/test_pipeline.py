"""
End-to-end tests for the dataset pipeline.

Synthetic scenes go through every stage with the mock detector; the HTTP
backend is exercised with `post_image` monkey-patched so no socket opens.
"""

from __future__ import annotations

import hashlib
import io
import itertools
import json
import urllib.error

import pytest

from conftest import FIXTURES, synthetic_dataset, write_config
from assetlocator.cluster import ClusterParams
from assetlocator.configuration import ConfigError, load_config
from assetlocator.detectors import http as http_module
from assetlocator.geodesy import planar_distance
from assetlocator.imaging import classify_directional
from assetlocator.models import STOP_SIGN, CompassBearing
from assetlocator.pipeline import (
    CAPTURES_FILE,
    ESTIMATES_FILE,
    FEATURES_FILE,
    KEPT,
    OBSERVATIONS_FILE,
    OUT_OF_RANGE,
    PipelineError,
    RunOptions,
    detect_dataset,
    ingest_dataset,
    locate_dataset,
    read_observations_csv,
    run_dataset,
    slice_dataset,
    write_reports,
)
from assetlocator.reports import expected_cardinals
from assetlocator.synth import SceneSpec, generate, load_planted_objects, write_scene


def _synth_config(tmp_path, datasets=None, **sections):
    config = load_config(
        write_config(tmp_path, datasets or [synthetic_dataset()], **sections), env={}
    )
    for dataset in config.datasets:
        if dataset.synthetic is None:
            continue
        scene = generate(
            SceneSpec.from_mapping(dataset.synthetic),
            dataset_id=dataset.id,
            imaging=config.imaging,
            sensor=config.sensor,
            object_widths=config.object_widths,
            max_range=config.cluster.max_detection_range,
        )
        write_scene(scene, config.paths_for(dataset))
    return config


def _field_dataset(**overrides):
    data = {
        "id": "field",
        "area": "Anaheim Hills",
        "track": str(FIXTURES / "stop_sign_track.csv"),
        "placeholder_rasters": True,
    }
    data.update(overrides)
    return data


HTTP_DETECTOR = {"backend": "http", "endpoint": "http://vision.test/detect", "backoff_seconds": 0}


# ---------------------------------------------------------------------------
# Synthetic scenes through the mock detector
# ---------------------------------------------------------------------------


def test_synthetic_scene_is_recovered_exactly(tmp_path):
    config = _synth_config(tmp_path)
    run = run_dataset(config, "synth")

    planted = load_planted_objects(config.paths_for(config.dataset("synth")))
    located = [e for e in run.clustering.estimates if e.located]
    assert len(run.features["features"]) == len(planted) == 7
    assert len(located) == 7
    for obj in planted:
        nearest = min(located, key=lambda e: planar_distance(e.mean_projected, obj.position))
        assert planar_distance(nearest.mean_projected, obj.position) < 1e-3
        assert nearest.object_class == obj.object_class

    summary = run.summary
    assert summary.conserved
    assert summary.noise == 0
    assert summary.photosphere_count == 200
    assert summary.cardinal_count == 1600
    assert summary.cardinals_analyzed == 1600
    assert summary.fully_processed
    assert not run.partial
    assert summary.objects_by_class == {"fire_hydrant": 2, "stop_sign": 5}


def _digests(*directories):
    return {
        str(path.relative_to(directory.parent)): hashlib.sha256(path.read_bytes()).hexdigest()
        for directory in directories
        for path in sorted(directory.rglob("*"))
        if path.is_file()
    }


def test_repeated_runs_write_identical_files(tmp_path):
    config = _synth_config(tmp_path, [synthetic_dataset(scene={"seed": 5})])
    paths = config.paths_for(config.dataset("synth"))

    run_dataset(config, "synth", RunOptions(jobs=1))
    report_dir = write_reports(config, config.datasets)
    first = _digests(paths.output_dir, paths.sidecars_dir, report_dir)
    run_dataset(config, "synth", RunOptions(jobs=4))
    write_reports(config, config.datasets)
    second = _digests(paths.output_dir, paths.sidecars_dir, report_dir)

    assert len(first) > 1600
    assert {"output/" + FEATURES_FILE, "reports/accuracy.csv"} <= set(first)
    assert first == second


def test_stages_can_run_one_at_a_time(tmp_path):
    config = _synth_config(
        tmp_path, [synthetic_dataset(scene={"seed": 1, "objects": {"stop_sign": 2}})]
    )
    dataset = config.dataset("synth")
    paths = config.paths_for(dataset)

    captures = ingest_dataset(config, dataset)
    assert paths.output(CAPTURES_FILE).exists()
    assert slice_dataset(config, dataset) == 8 * len(captures)
    assert len(list(paths.cardinals_dir.glob("*.jpg"))) == 8 * len(captures)

    records, stats = detect_dataset(config, dataset)
    assert read_observations_csv(paths.output(OBSERVATIONS_FILE)) == records
    assert stats.failed_slices == 0
    sidecars = sorted(paths.sidecars_dir.glob("*.json"))
    assert [p.stem for p in sidecars] == sorted(p.stem for p in paths.cardinals_dir.glob("*.jpg"))
    payloads = {p: json.loads(p.read_text(encoding="utf-8")) for p in sidecars}
    single, payload = next((p, d) for p, d in payloads.items() if len(d["detections"]) == 1)
    capture = next(c for c in captures if c.capture_id == payload["capture_id"])
    directional = payload["directional_class"]
    assert single.stem == f"{capture.image_ref}_C{payload['cardinal_index']}_{directional['id']}"
    assert payload["dataset_id"] == "synth"
    assert payload["image_id"] == capture.image_ref
    assert 1 <= payload["cardinal_index"] <= 8
    expected = classify_directional(CompassBearing(payload["center_bearing"]))
    assert directional == {
        "id": expected.id,
        "code": expected.code,
        "description": expected.description,
    }
    (detection,) = payload["detections"]
    assert set(detection) == {"object_class", "bbox", "confidence"}
    assert detection["object_class"] == STOP_SIGN
    assert len(detection["bbox"]) == 4
    assert detection["bbox"][0] < detection["bbox"][2]
    assert detection["confidence"] == 1.0

    before = {p: p.read_bytes() for p in sidecars}
    detect_dataset(config, dataset)
    assert {p: p.read_bytes() for p in sidecars} == before

    run = locate_dataset(config, dataset)
    assert len(run.features["features"]) == 2
    stored = json.loads(paths.output(FEATURES_FILE).read_text(encoding="utf-8"))
    assert stored == run.features
    assert stored["features"][0]["geometry"]["coordinates"][0] < 0


def test_cluster_overrides_change_the_grouping(tmp_path):
    config = _synth_config(tmp_path)
    run = run_dataset(config, "synth", RunOptions(cluster=ClusterParams(min_pts=500)))
    assert run.clustering.estimates == []
    assert run.summary.clustered == 0
    assert run.summary.noise > 0
    assert run.summary.conserved


def test_reports_roll_up_every_located_dataset(tmp_path):
    config = _synth_config(
        tmp_path,
        [
            synthetic_dataset("a", "Anaheim Hills", {"seed": 1}),
            synthetic_dataset("b", "Yorba Linda", {"seed": 2}),
        ],
    )
    for dataset in config.datasets:
        run_dataset(config, dataset.id)
    report_dir = write_reports(config, config.datasets)

    areas = (report_dir / "areas.txt").read_text(encoding="utf-8").splitlines()
    assert areas[2].startswith("Anaheim Hills")
    assert areas[3].startswith("Yorba Linda")
    assert areas[4].startswith("All")
    accuracy = (report_dir / "accuracy.txt").read_text(encoding="utf-8")
    assert "Displayed values scaled x10^-4 (degrees)" in accuracy
    assert (report_dir / "datasets.csv").read_text(encoding="utf-8").count("\n") == 3


def test_reports_need_a_located_dataset(tmp_path):
    config = _synth_config(tmp_path)
    with pytest.raises(PipelineError, match="no located datasets"):
        write_reports(config, config.datasets)


# ---------------------------------------------------------------------------
# Failure handling
# ---------------------------------------------------------------------------


def test_missing_track_is_a_pipeline_error(tmp_path):
    config = load_config(write_config(tmp_path, [{"id": "ghost"}]), env={})
    with pytest.raises(PipelineError, match="track file not found"):
        run_dataset(config, "ghost")


def test_mock_detector_needs_ground_truth(tmp_path):
    config = load_config(write_config(tmp_path, [_field_dataset()]), env={})
    with pytest.raises(ConfigError, match="ground_truth.json"):
        detect_dataset(config, config.dataset("field"))


def test_locate_before_detect_is_a_pipeline_error(tmp_path):
    config = load_config(write_config(tmp_path, [_field_dataset()]), env={})
    with pytest.raises(PipelineError, match="run detect first"):
        locate_dataset(config, config.dataset("field"))


def test_missing_photospheres_mark_their_slices_failed(tmp_path):
    config = load_config(
        write_config(tmp_path, [_field_dataset(placeholder_rasters=False)]), env={}
    )
    dataset = config.dataset("field")
    ground_truth = config.paths_for(dataset).ground_truth_path
    ground_truth.parent.mkdir(parents=True, exist_ok=True)
    ground_truth.write_text('{"detections": {}}', encoding="utf-8")

    run = run_dataset(config, "field")
    assert run.partial
    assert run.summary.failed_slices == 6
    assert run.summary.cardinal_count == 0
    assert run.features["features"] == []


def test_detector_failures_leave_a_partial_but_consistent_run(tmp_path, monkeypatch):
    calls = itertools.count()

    def flaky_post(url, body, headers, timeout):
        if next(calls) % 2 == 0:
            raise urllib.error.HTTPError(url, 400, "bad image", {}, io.BytesIO(b""))
        return json.dumps(
            {"detections": [{"class": "stop sign", "bbox": [40, 40, 60, 60], "score": 0.9}]}
        ).encode("utf-8")

    monkeypatch.setattr(http_module, "post_image", flaky_post)
    config = load_config(
        write_config(tmp_path, [_field_dataset()], detector=HTTP_DETECTOR), env={}
    )
    run = run_dataset(config, "field")
    assert run.partial
    assert run.summary.failed_slices == 3
    assert run.summary.cardinals_analyzed == 6
    assert run.summary.total_detections == 3
    assert run.summary.conserved


def _empty_replies(monkeypatch):
    monkeypatch.setattr(http_module, "post_image", lambda *args: b'{"detections": []}')


def test_forward_right_mode_analyses_one_slice_per_photosphere(tmp_path, monkeypatch):
    _empty_replies(monkeypatch)
    config = load_config(
        write_config(tmp_path, [_field_dataset()], detector=HTTP_DETECTOR), env={}
    )
    summary = run_dataset(config, "field").summary
    assert summary.photosphere_count == 6
    assert summary.cardinal_count == expected_cardinals(6) == 48
    assert summary.cardinals_analyzed == expected_cardinals(6, 1) == 6
    assert summary.fully_processed

    summary = run_dataset(config, "field", RunOptions(all_cardinals=True)).summary
    assert summary.cardinal_count == summary.cardinals_analyzed == 48
    assert summary.failed_slices == 0


def test_unwritable_slice_is_counted_as_failed(tmp_path, monkeypatch):
    _empty_replies(monkeypatch)
    config = load_config(
        write_config(tmp_path, [_field_dataset()], detector=HTTP_DETECTOR), env={}
    )
    dataset = config.dataset("field")
    paths = config.paths_for(dataset)
    ingest_dataset(config, dataset)
    slice_dataset(config, dataset)
    blocked = sorted(paths.cardinals_dir.glob("*_C1_*.jpg"))[0]
    blocked.unlink()
    blocked.mkdir()

    run = run_dataset(config, "field")
    assert run.partial
    assert run.summary.failed_slices == 1
    assert run.summary.cardinal_count == 47
    assert run.summary.cardinals_analyzed == 5
    assert not run.summary.fully_processed
    assert blocked.is_dir()
    assert not (paths.sidecars_dir / f"{blocked.stem}.json").exists()
    assert len(list(paths.sidecars_dir.glob("*.json"))) == 47
    assert not list(paths.cardinals_dir.glob(".*"))


def test_range_gate_spares_boxes_clipped_by_the_slice_edge(tmp_path, monkeypatch):
    reply = {
        "detections": [
            # One pixel wide in the middle of the slice: far beyond range.
            {"class": "stop sign", "bbox": [50, 40, 51, 60], "score": 0.9},
            # Same width against the left edge: clipped, so its width says nothing.
            {"class": "stop sign", "bbox": [0, 40, 1, 60], "score": 0.8},
        ]
    }
    monkeypatch.setattr(
        http_module, "post_image", lambda *args: json.dumps(reply).encode("utf-8")
    )
    config = load_config(
        write_config(tmp_path, [_field_dataset()], detector=HTTP_DETECTOR), env={}
    )
    records, stats = detect_dataset(config, config.dataset("field"))
    assert len(records) == 12
    assert [r.status for r in records[:2]] == [OUT_OF_RANGE, KEPT]
    assert records[0].estimated_range > config.cluster.max_detection_range

    run = locate_dataset(config, config.dataset("field"))
    assert run.summary.discarded_out_of_range == 6
    assert run.summary.conserved
