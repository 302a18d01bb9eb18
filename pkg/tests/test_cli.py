import json

import pytest

from isothermic.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_FAIL, EXIT_OK, main

CYCLIDE = {"family": "cyclide", "params": {"n": 2, "m": 1, "c": 1.0}}
PRODUCT = {"family": "extrinsic_product", "params": {"parts": [
    {"type": "line", "point": [0.0], "direction": [1.0]},
    {"type": "circle", "radius": 2.0, "center": [1.0, 0.5], "range": [0.0, 5.0]}]}}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(tmp_path, command, cfg, *extra):
    return main([command, "--config", write(tmp_path / f"{command}.json", cfg), "--out", str(tmp_path), *extra])


def test_generate_writes_chart_and_mesh(tmp_path):
    assert run(tmp_path, "generate", {"construction": CYCLIDE, "resolution": 5}) == EXIT_OK
    art = json.loads((tmp_path / "chart.json").read_text())
    assert art["format"] == "isothermic-chart" and art["dim"] == 2 and art["ambient_dim"] == 3
    obj = (tmp_path / "chart.obj").read_text().splitlines()
    assert sum(line.startswith("v ") for line in obj) == 25
    assert sum(line.startswith("f ") for line in obj) == 2 * 16
    assert json.loads((tmp_path / "timing.json").read_text())["command"] == "generate"


def test_verify_from_artifact_and_export(tmp_path):
    assert run(tmp_path, "generate", {"construction": CYCLIDE, "resolution": 5}) == EXIT_OK
    cfg = {"chart": "chart.json", "checks": ["conformality", "adaptedness", "dupin"]}
    assert run(tmp_path, "verify", cfg) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] and len(report["checks"]) == 3
    assert run(tmp_path, "export", {"chart": "chart.json", "format": "csv"}) == EXIT_OK
    lines = (tmp_path / "chart.csv").read_text().splitlines()
    assert len(lines) == 1 + 25


def test_verify_failure_exit(tmp_path):
    cfg = {"construction": {**CYCLIDE, "perturbation": {"eps": 0.01}}, "resolution": 5, "checks": ["adaptedness"]}
    assert run(tmp_path, "verify", cfg) == EXIT_FAIL


@pytest.mark.parametrize("cfg", [
    {"construction": {"family": "cyclide", "params": {"n": 2, "m": 2, "c": 1.0}}},
    {"construction": {"family": "nope"}},
    {"construction": CYCLIDE, "resolution": 2},
    {"construction": CYCLIDE, "checks": ["made_up"]},
])
def test_config_errors(tmp_path, cfg):
    assert run(tmp_path, "generate" if "checks" not in cfg else "verify", cfg) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_bad_tolerance_scale(tmp_path):
    assert run(tmp_path, "verify", {"construction": CYCLIDE}, "--tolerance-scale", "-1") == EXIT_CONFIG


def test_degenerate_transform_exit(tmp_path):
    cfg = {"construction": PRODUCT, "resolution": 5,
           "transform": {"kind": "trivial", "params": {"a": 0.0}, "output": "ribaucour"}}
    assert run(tmp_path, "transform", cfg) == EXIT_DEGENERATE


def test_transform_then_verify(tmp_path):
    cfg = {"construction": PRODUCT, "resolution": 5,
           "transform": {"kind": "darboux_sphere_factor", "params": {"P2": [1.0, 0.5], "r2": 2.0}}}
    assert run(tmp_path, "transform", cfg) == EXIT_OK
    verdicts = json.loads((tmp_path / "transform_report.json").read_text())["verdicts"]
    assert verdicts["darboux"] == "darboux"
    checks = ["ribaucour_metric", "ribaucour_connection", "ribaucour_second_form", "darboux"]
    assert run(tmp_path, "verify", {"chart": "transformed.json", "checks": checks}) == EXIT_OK


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ISOTHERMIC_OUT", str(tmp_path))
    cfg = write(tmp_path / "g.json", {"construction": CYCLIDE, "resolution": 3})
    assert main(["generate", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "chart.json").exists()


def test_verify_reports_are_byte_identical(tmp_path):
    cfg = {"construction": CYCLIDE, "resolution": 5, "checks": ["conformality", "adaptedness"]}
    blobs = []
    for _ in range(2):
        assert run(tmp_path, "verify", cfg, "--seed", "7") == EXIT_OK
        blobs.append((tmp_path / "report.json").read_bytes())
    assert blobs[0] == blobs[1]
