import json
from unittest.mock import MagicMock

import pytest

from trapcal import cli
from trapcal.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, main, run_scenario
from trapcal.config import SCENARIO_NAMES, default_config_text, validate_config


@pytest.fixture
def fringe_config(tmp_path):
    text = (
        default_config_text("fringe")
        .replace("M: [1, 2, 4, 8, 16]", "M: [1, 2]")
        .replace("points: 1001", "points: 101")
    )
    path = tmp_path / "fringe.yaml"
    path.write_text(text)
    return path


def _report(capsys):
    return json.loads(capsys.readouterr().out)


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in SCENARIO_NAMES:
        assert name in out


def test_validate(fringe_config, capsys):
    assert main(["validate", str(fringe_config)]) == EXIT_OK
    assert "valid 'fringe' config" in capsys.readouterr().out


def test_validate_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\nscenario: fringe\nseed: -1\n")
    assert main(["validate", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "seed: must be >= 0" in err
    assert "settings: required key is missing" in err


def test_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_run_writes_outputs(fringe_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["-q", "run", str(fringe_config), "--out", str(out)]) == EXIT_OK
    report = _report(capsys)

    assert report["scenario"] == "fringe"
    assert report["seed"] == 42
    assert list(report["digests"]) == ["fringe_fringe.csv"]
    assert (out / "fringe_fringe.csv").exists()
    assert (out / "fringe_report.json").exists()
    assert report["metrics"]["frequency_ratio_to_M1"] == {"1": 1.0, "2": 2.0}


def test_runs_are_reproducible(fringe_config, tmp_path, capsys):
    main(["-q", "run", str(fringe_config), "--out", str(tmp_path / "a")])
    first = _report(capsys)
    main(["-q", "run", str(fringe_config), "--out", str(tmp_path / "b")])
    second = _report(capsys)
    assert first["digests"] == second["digests"]


def test_seed_override(fringe_config, tmp_path, capsys):
    args = ["-q", "run", str(fringe_config), "--out", str(tmp_path)]
    assert main(args + ["--seed", "7"]) == EXIT_OK
    assert _report(capsys)["seed"] == 7
    assert main(args + ["--seed", "-1"]) == EXIT_CONFIG


def test_domain_error_exit_code(tmp_path, capsys):
    """
    The robust control phase families need an even sequence length
    """
    path = tmp_path / "robustness.yaml"
    path.write_text(default_config_text("robustness").replace("M: [16]", "M: [3]"))
    assert main(["-q", "run", str(path), "--out", str(tmp_path)]) == EXIT_DOMAIN
    assert "OddM" in capsys.readouterr().err


def test_run_scenario_uses_config_output(tmp_path):
    text = default_config_text("resonator").replace(
        "seed: 42", f"seed: 42\noutput: {tmp_path / 'from-config'}"
    )
    report = run_scenario(validate_config(text))
    assert (tmp_path / "from-config" / "resonator_report.json").exists()
    assert report.scenario == "resonator"


def test_plain_value_error_exit_code(fringe_config, tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(
        cli, "run_scenario", MagicMock(side_effect=ValueError("T2 must be positive"))
    )
    assert main(["-q", "run", str(fringe_config), "--out", str(tmp_path)]) == EXIT_DOMAIN
    assert "ValueError: T2 must be positive" in capsys.readouterr().err
