from pathlib import Path

import pytest

from trapcal.config import (
    OUTPUT_ENV,
    SCENARIO_NAMES,
    default_config_text,
    default_output_dir,
    load_config,
    load_default_config,
    validate_config,
)
from trapcal.errors import ConfigInvalid, ScenarioUnknown

MINIMAL = """
schema_version: 1
scenario: fringe
seed: 3
settings:
  - label: A
    secular_hz: [1500000.0, 1600000.0, 1000000.0]
  - label: B
    secular_hz: [600000.0, 700000.0, 1000000.0]
beams:
  - id: h
    wavelength_m: 6.74e-07
    azimuth_deg: -45.0
schedule:
  M: [2]
  shots: 100
  settings: [A, B]
  beams: [h]
"""


@pytest.mark.parametrize("name", SCENARIO_NAMES)
def test_bundled_configs_validate(name):
    config = load_default_config(name)
    assert config.scenario == name
    assert config.seed == 42


def test_minimal_config_defaults():
    config = validate_config(MINIMAL)
    assert config.seed == 3
    assert config.estimator == "arcsin"
    assert config.drive is None
    assert config.geometry is None
    assert config.schedule.M == (2,)
    assert config.context.setting("B").label == "B"
    assert config.ion.charge_to_mass == pytest.approx(1.0964e6, rel=1e-3)


def test_empty_file_lists_every_required_key():
    with pytest.raises(ConfigInvalid) as info:
        validate_config("")
    for key in ("schema_version", "scenario", "seed", "settings", "beams", "schedule"):
        assert f"{key}: required key is missing" in info.value.errors


def test_negative_t2_is_a_single_error():
    with pytest.raises(ConfigInvalid) as info:
        validate_config(MINIMAL + "noise:\n  t2_s: -1.0\n")
    assert len(info.value.errors) == 1
    assert info.value.errors[0].startswith("noise.t2_s")


def test_unknown_beam_id_is_named():
    text = MINIMAL.replace("beams: [h]", "beams: [x]")
    with pytest.raises(ConfigInvalid, match="unknown beam id 'x'"):
        validate_config(text)


def test_every_violation_is_reported():
    text = (
        MINIMAL.replace("shots: 100", "shots: 7")
        .replace("seed: 3", "seed: -1")
        .replace("schema_version: 1", "schema_version: 2")
    )
    with pytest.raises(ConfigInvalid) as info:
        validate_config(text + "estimator: guess\n")
    paths = [error.split(":")[0] for error in info.value.errors]
    assert sorted(paths) == ["estimator", "schedule.shots", "schema_version", "seed"]


def test_unknown_keys_rejected():
    with pytest.raises(ConfigInvalid, match="colour: unknown key"):
        validate_config(MINIMAL + "colour: blue\n")


def test_scaled_setting_needs_drive():
    text = MINIMAL.replace("secular_hz: [600000.0, 700000.0, 1000000.0]", "scale: 0.6")
    with pytest.raises(ConfigInvalid, match="needs a drive section"):
        validate_config(text)


def test_scale_below_stability_limit():
    drive = (
        "drive:\n"
        "  secular_hz: [1500000.0, 1600000.0, 1000000.0]\n"
        "  rf_drive_hz: 20000000.0\n"
    )
    text = MINIMAL.replace("secular_hz: [600000.0, 700000.0, 1000000.0]", "scale: 0.3")
    text += drive
    with pytest.raises(ConfigInvalid, match="stability limit"):
        validate_config(text)


def test_dependent_electrodes_rejected():
    text = MINIMAL + (
        "electrodes:\n"
        "  field_per_volt_v_per_m:\n"
        "    - [1.0, 2.0]\n"
        "    - [2.0, 4.0]\n"
        "    - [0.0, 0.0]\n"
    )
    with pytest.raises(ConfigInvalid, match="electrodes.field_per_volt_v_per_m"):
        validate_config(text)


def test_invalid_yaml():
    with pytest.raises(ConfigInvalid, match="not valid YAML"):
        validate_config("seed: [1, 2")


def test_load_config(tmp_path):
    path = tmp_path / "fringe.yaml"
    path.write_text(MINIMAL)
    assert load_config(path).scenario == "fringe"


def test_with_seed_updates_raw():
    config = validate_config(MINIMAL).with_seed(9)
    assert config.seed == 9
    assert config.raw["seed"] == 9
    with pytest.raises(ValueError):
        config.with_seed(-1)


def test_unknown_bundled_config():
    with pytest.raises(ScenarioUnknown) as info:
        default_config_text("nope")
    assert str(info.value) == "Unknown scenario 'nope'"
    assert isinstance(info.value, KeyError)


def test_default_output_dir():
    config = validate_config(MINIMAL)
    assert default_output_dir(config, {}) == Path("trapcal-output") / "fringe"
    assert default_output_dir(config, {OUTPUT_ENV: "/tmp/x"}) == Path("/tmp/x")
    with_output = validate_config(MINIMAL + "output: results\n")
    assert default_output_dir(with_output, {OUTPUT_ENV: "/tmp/x"}) == Path("results")
