from abc import ABC, abstractmethod
import csv
from dataclasses import dataclass, field
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from trapcal.compensation import ElectrodeGeometry, LoopConfig, Observable
from trapcal.config import ScenarioConfig
from trapcal.errors import ConfigInvalid
from trapcal.montecarlo import trial_rng

logger = logging.getLogger(__name__)


@dataclass
class Table:
    """Rows of one CSV output, in a fixed column order"""

    columns: List[str]
    rows: List[Sequence[Any]] = field(default_factory=list)

    def append(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError(
                f"Row has {len(values)} values for {len(self.columns)} columns"
            )
        self.rows.append(values)

    def column(self, name: str) -> List[Any]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


@dataclass
class ScenarioResult:
    tables: Dict[str, Table]
    metrics: Dict[str, Any]


@dataclass
class RunReport:
    scenario: str
    seed: int
    wall_time_s: float
    digests: Dict[str, str]
    metrics: Dict[str, Any]
    output_dir: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
            "digests": self.digests,
            "metrics": self.metrics,
        }


def format_value(value: Any) -> str:
    """
    CSV text of one value. Floats use ``repr``, the shortest string that reads
    back to the same float.
    """
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays, and non-finite floats, for ``json.dump``"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fd:
        for block in iter(lambda: fd.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


class Scenario(ABC):
    """
    Abstract Base Class for a named, reproducible experiment.

    Concrete scenarios set ``name`` and implement ``run``. ::

        class MyScenario(Scenario):
            name = "my-scenario"

            def run(self):
                ...
                return ScenarioResult(tables, metrics)
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """
        Name used on the command line, in output file names and as the random
        stream name
        """
        pass

    def __init__(self, config: ScenarioConfig, n_jobs: int = 1):
        """
        :param config: Validated scenario configuration
        :param n_jobs: Joblib jobs for Monte Carlo fan-out
        """
        self.config = config
        self.n_jobs = n_jobs

    def get_name(self) -> str:
        """
        Stem of every output file, without path or extension
        """
        return self.name

    def get_parameters(self) -> Dict[str, Any]:
        """
        Parameters the scenario was built from, as read from the config file
        """
        return dict(self.config.raw)

    def param(self, key: str, default: Any = None) -> Any:
        return self.config.params.get(key, default)

    def rng(self, index: int = 0, stream: Optional[str] = None) -> np.random.Generator:
        """
        Counter-based generator keyed on the seed, this scenario and ``index``
        """
        return trial_rng(self.config.seed, stream or self.name, index)

    def setting_scale(self, label: str) -> Optional[float]:
        """RF scale a trap setting was given with in the config, if any"""
        for entry in self.config.raw.get("settings", []):
            if isinstance(entry, dict) and entry.get("label") == label:
                return entry.get("scale")
        return None

    def require(self, *keys: str) -> None:
        """
        Check that the optional config sections this scenario needs are present

        :raises ConfigInvalid: Naming every missing section
        """
        missing = [key for key in keys if getattr(self.config, key) is None]
        if missing:
            raise ConfigInvalid(
                [f"{key}: required by scenario '{self.name}'" for key in missing]
            )

    def loop_config(
        self,
        observables: Sequence[Observable],
        geometry: Optional[ElectrodeGeometry] = None,
        estimator: Optional[str] = None,
        context=None,
    ) -> LoopConfig:
        """Loop configuration using the config's noise, shots and pulse timing"""
        config = self.config
        return LoopConfig(
            context=context or config.context,
            observables=tuple(observables),
            geometry=geometry,
            noise=config.noise,
            shots=config.schedule.shots // 2,
            estimator=estimator or config.estimator,
            pi_time=config.schedule.pi_time,
            wait=config.schedule.wait,
        )

    @abstractmethod
    def run(self) -> ScenarioResult:
        """
        Run the experiment. Must not depend on anything but the config and seed.

        :return: Output tables and headline metrics
        """
        pass

    def __build_full_path(
        self, extension: str, path_prefix: Union[str, Path], extra_params: str = ""
    ) -> Path:
        """
        Build a filename, creating directories so it can be immediately
        written to if necessary
        """

        filename = self.get_name() + extra_params + extension

        if path_prefix:
            path_prefix = Path(path_prefix).resolve()
        else:
            path_prefix = Path.cwd()

        filename = path_prefix.joinpath(filename)

        if not filename.parent.exists():
            filename.parent.mkdir(parents=True)

        return filename

    def save(
        self,
        result: ScenarioResult,
        path_prefix: Union[Path, str] = None,
        wall_time_s: float = 0.0,
    ) -> RunReport:
        """
        Write every table to ``<name>_<table>.csv`` and the run report to
        ``<name>_report.json``

        :param result: Output of :meth:`run`
        :param path_prefix: Folder to save to, default the current directory
        :param wall_time_s: Time the run took, recorded in the report
        :return: The run report, with a sha256 digest of every CSV
        """
        digests = {}
        for table_name, table in result.tables.items():
            filename = self.__build_full_path(".csv", path_prefix, f"_{table_name}")
            with open(filename, "w", newline="") as fd:
                writer = csv.writer(fd, lineterminator="\n")
                writer.writerow(table.columns)
                for row in table.rows:
                    writer.writerow([format_value(v) for v in row])
            digests[filename.name] = sha256_file(filename)
            logger.debug("Wrote %d rows to %s", len(table.rows), filename)

        report = RunReport(
            self.name,
            self.config.seed,
            wall_time_s,
            digests,
            to_jsonable(result.metrics),
        )
        report_filename = self.__build_full_path(".json", path_prefix, "_report")
        report.output_dir = str(report_filename.parent)
        with open(report_filename, "w+") as fd:
            json.dump(report.to_dict(), fd, indent=2, sort_keys=True)

        return report
