import json
import math

import numpy as np
import pytest

from trapcal.config import load_default_config
from trapcal.errors import ConfigInvalid
from trapcal.scenario import (
    Scenario,
    ScenarioResult,
    Table,
    format_value,
    sha256_file,
    to_jsonable,
)


class FakeScenario(Scenario):
    """
    Two small tables and a few metrics, with values drawn from the
    scenario's own random stream
    """

    name = "fake"

    def run(self):
        rng = self.rng()
        draws = Table(["index", "value"])
        for index in range(3):
            draws.append(index, rng.normal())
        flags = Table(["flag", "ratio"])
        flags.append(True, 0.1)
        flags.append(False, math.nan)
        metrics = {"mean": np.float64(0.5), "sizes": np.array([1, 2])}
        return ScenarioResult({"draws": draws, "flags": flags}, metrics)


@pytest.fixture
def config():
    return load_default_config("fringe")


class TestTable:
    def test_rows_must_match_columns(self):
        table = Table(["a", "b"])
        table.append(1, 2)
        with pytest.raises(ValueError):
            table.append(1)
        assert table.column("b") == [2]

    def test_format_value(self):
        assert format_value(True) == "true"
        assert format_value(np.bool_(False)) == "false"
        assert format_value(np.int64(3)) == "3"
        assert format_value(0.1) == "0.1"
        assert format_value(np.float32(0.5)) == "0.5"
        assert float(format_value(1 / 3)) == 1 / 3
        assert format_value("h") == "h"

    def test_to_jsonable(self):
        converted = to_jsonable({"a": np.array([1.0, math.inf]), 2: np.int32(4)})
        assert converted == {"a": [1.0, "inf"], "2": 4}
        json.dumps(converted)


class TestScenario:
    def test_params_fall_back_to_default(self, config):
        scenario = FakeScenario(config)
        assert scenario.param("points") == 1001
        assert scenario.param("missing", 7) == 7

    def test_rng_is_keyed_on_seed(self, config):
        first = FakeScenario(config).rng().random(3)
        again = FakeScenario(config).rng().random(3)
        other = FakeScenario(config.with_seed(43)).rng().random(3)
        assert np.array_equal(first, again)
        assert not np.array_equal(first, other)

    def test_require_names_missing_sections(self, config):
        with pytest.raises(ConfigInvalid, match="drive: required by scenario 'fake'"):
            FakeScenario(config).require("drive", "settings")

    def test_setting_scale(self):
        scenario = FakeScenario(load_default_config("geometry-2d"))
        assert scenario.setting_scale("B") == 0.6
        assert scenario.setting_scale("missing") is None


class TestSaving:
    def test_save_writes_tables_and_report(self, tmp_path, config):
        scenario = FakeScenario(config)
        report = scenario.save(scenario.run(), tmp_path, wall_time_s=1.5)

        draws = tmp_path / "fake_draws.csv"
        flags = tmp_path / "fake_flags.csv"
        assert draws.exists()
        assert flags.read_text() == "flag,ratio\ntrue,0.1\nfalse,nan\n"
        assert report.digests == {
            "fake_draws.csv": sha256_file(draws),
            "fake_flags.csv": sha256_file(flags),
        }

        saved = json.loads((tmp_path / "fake_report.json").read_text())
        assert saved["scenario"] == "fake"
        assert saved["seed"] == 42
        assert saved["wall_time_s"] == 1.5
        assert saved["metrics"] == {"mean": 0.5, "sizes": [1, 2]}
        assert saved["digests"] == report.digests

    def test_save_creates_missing_folders(self, tmp_path, config):
        scenario = FakeScenario(config)
        out = tmp_path / "nested" / "out"
        report = scenario.save(scenario.run(), out)
        assert (out / "fake_report.json").exists()
        assert report.output_dir == str(out.resolve())

    def test_same_seed_same_digests(self, tmp_path, config):
        first = FakeScenario(config)
        second = FakeScenario(config)
        a = first.save(first.run(), tmp_path / "a")
        b = second.save(second.run(), tmp_path / "b")
        assert a.digests == b.digests
