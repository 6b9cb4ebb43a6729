import io
import json
import urllib.error

from conftest import FIXTURES, synthetic_dataset, write_config
from assetlocator import cli
from assetlocator.detectors import http as http_module


def _run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_missing_config_is_an_input_error(tmp_path, capsys):
    missing = tmp_path / "absent.yaml"
    code, _, err = _run(capsys, "ingest", "--config", str(missing))
    assert code == cli.EXIT_INPUT_ERROR
    assert "config file not found" in err
    assert str(missing) in err


def test_synth_then_run_all_locates_every_planted_object(tmp_path, capsys):
    config = write_config(tmp_path, [synthetic_dataset()])

    code, out, _ = _run(capsys, "synth", "--config", str(config), "--seed", "7", "--objects", "5")
    assert code == cli.EXIT_OK
    assert "synth: 200 captures, 5 objects" in out

    code, out, err = _run(capsys, "run-all", "--config", str(config))
    assert code == cli.EXIT_OK, err
    features = json.loads(
        (tmp_path / "datasets" / "synth" / "output" / "features.geojson").read_text(
            encoding="utf-8"
        )
    )
    assert len(features["features"]) == 5
    assert "Anaheim Hills" in out
    assert (tmp_path / "reports" / "accuracy.txt").exists()


def test_stages_run_one_at_a_time(tmp_path, capsys):
    config = str(write_config(tmp_path, [synthetic_dataset(scene={"seed": 2})]))
    assert _run(capsys, "synth", "--config", config)[0] == cli.EXIT_OK

    code, out, _ = _run(capsys, "ingest", "--config", config)
    assert (code, out) == (cli.EXIT_OK, "synth: 200 captures\n")
    code, out, _ = _run(capsys, "slice", "--config", config, "--jobs", "3")
    assert (code, out) == (cli.EXIT_OK, "synth: 1600 cardinal images\n")
    code, out, _ = _run(capsys, "detect", "--config", config)
    assert code == cli.EXIT_OK
    assert "from 1600 analysed slices" in out
    code, out, _ = _run(capsys, "locate", "--config", config, "--eps", "20")
    assert code == cli.EXIT_OK
    assert out.splitlines()[0].startswith("Dataset")
    code, out, _ = _run(capsys, "report", "--config", config, "--dataset", "synth")
    assert code == cli.EXIT_OK
    assert "Displayed values scaled x10^-4 (degrees)" in out


def test_locate_before_detect_reports_the_missing_stage(tmp_path, capsys):
    config = str(write_config(tmp_path, [synthetic_dataset()]))
    _run(capsys, "synth", "--config", config)
    code, _, err = _run(capsys, "locate", "--config", config)
    assert code == cli.EXIT_INPUT_ERROR
    assert "run detect first" in err


def test_synth_without_synthetic_datasets_fails(tmp_path, capsys):
    config = str(write_config(tmp_path, [{"id": "field"}]))
    code, _, err = _run(capsys, "synth", "--config", config)
    assert code == cli.EXIT_INPUT_ERROR
    assert "No synthetic datasets" in err


def test_bad_overrides_are_input_errors(tmp_path, capsys):
    config = str(write_config(tmp_path, [synthetic_dataset()]))
    code, _, err = _run(capsys, "slice", "--config", config, "--jobs", "0")
    assert code == cli.EXIT_INPUT_ERROR
    assert "--jobs" in err
    code, _, err = _run(capsys, "detect", "--config", config, "--min-confidence", "1.5")
    assert code == cli.EXIT_INPUT_ERROR
    code, _, err = _run(capsys, "locate", "--config", config, "--min-pts", "1")
    assert code == cli.EXIT_INPUT_ERROR
    assert "min_pts" in err
    code, _, err = _run(capsys, "ingest", "--config", config, "--dataset", "nope")
    assert code == cli.EXIT_INPUT_ERROR
    assert "unknown dataset 'nope'" in err


def test_detector_failures_exit_with_partial_status(tmp_path, capsys, monkeypatch):
    def failing_post(url, body, headers, timeout):
        raise urllib.error.HTTPError(url, 400, "bad image", {}, io.BytesIO(b""))

    monkeypatch.setattr(http_module, "post_image", failing_post)
    dataset = {
        "id": "field",
        "track": str(FIXTURES / "stop_sign_track.csv"),
        "placeholder_rasters": True,
    }
    config = str(
        write_config(
            tmp_path,
            [dataset],
            detector={"backend": "http", "endpoint": "http://vision.test", "backoff_seconds": 0},
        )
    )
    code, _, err = _run(capsys, "detect", "--config", config)
    assert code == cli.EXIT_PARTIAL
    assert "field: 6 slice(s) could not be analysed" in err


def test_monte_carlo_prints_scaled_sigmas(tmp_path, capsys):
    config = str(write_config(tmp_path, []))
    code, out, _ = _run(capsys, "synth", "--config", config, "--monte-carlo", "5", "--seed", "3")
    assert code == cli.EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("objects")
    assert lines[1].startswith("mean sigma_lat")
    assert lines[1].endswith("x10^-4 deg")
    assert lines[3].endswith("ft")
