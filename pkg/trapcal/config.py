"""
Scenario configuration files.

A config is one YAML document (schema version 1). :func:`validate_config`
checks all of it, collecting every violation before raising, and builds the
trap objects the scenarios run on. Frequencies are given in Hz and converted
to rad/s here; every other quantity is SI with the unit in the key name.
"""

from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

try:
    from importlib.resources import open_text
except ImportError:
    from importlib_resources import open_text

import yaml

from trapcal.compensation import DriftModel, ElectrodeGeometry
from trapcal.errors import ConfigInvalid, DomainError, ScenarioUnknown
from trapcal.pulses import DEFAULT_WAIT, NoiseModel, TrapContext
from trapcal.resonator import ResonatorParams
from trapcal.trap import (
    DEFAULT_PI_TIME,
    IonSpecies,
    LaserBeam,
    RfDriveModel,
    TrapSetting,
    beam_from_angles,
    secular_from_scale,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ENV = "TRAPCAL_OUTPUT_DIR"

SCENARIO_NAMES = (
    "fringe",
    "method-b-drift",
    "closed-loop",
    "robustness",
    "rpe-scaling",
    "geometry-2d",
    "axial",
    "stat-uncertainty",
    "resonator",
)
ESTIMATORS = ("arcsin", "arctan2", "arctan2_offset", "averagedI_II")

REQUIRED_KEYS = ("schema_version", "scenario", "seed", "settings", "beams", "schedule")
OPTIONAL_KEYS = (
    "output",
    "ion",
    "drive",
    "noise",
    "estimator",
    "electrodes",
    "drift",
    "resonator",
    "params",
)

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class Schedule:
    M: Tuple[int, ...]
    shots: int
    theta_T: Tuple[float, ...]
    pi_time: float = DEFAULT_PI_TIME
    wait: float = DEFAULT_WAIT
    settings: Tuple[str, ...] = ()
    beams: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    scenario: str
    seed: int
    ion: IonSpecies
    settings: Tuple[TrapSetting, ...]
    beams: Tuple[LaserBeam, ...]
    schedule: Schedule
    noise: NoiseModel = NoiseModel()
    estimator: str = "arcsin"
    drive: Optional[RfDriveModel] = None
    geometry: Optional[ElectrodeGeometry] = None
    drift: DriftModel = DriftModel()
    resonator: Optional[ResonatorParams] = None
    params: Mapping[str, Any] = field(default_factory=dict)
    output: Optional[str] = None
    raw: Mapping[str, Any] = field(default_factory=dict)

    @property
    def context(self) -> TrapContext:
        return TrapContext.build(self.ion, self.settings, self.beams)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        return replace(self, seed=seed, raw={**self.raw, "seed": seed})


class _Checker:
    """
    Accumulates violations so that one pass reports all of them
    """

    def __init__(self):
        self.errors: List[str] = []

    def error(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def mapping(self, value: Any, path: str) -> Optional[Mapping]:
        if not isinstance(value, dict):
            self.error(path, f"must be a mapping, got {type(value).__name__}")
            return None
        return value

    def unknown_keys(self, section: Mapping, allowed, path: str) -> None:
        for key in section:
            if key not in allowed:
                self.error(f"{path}.{key}" if path else str(key), "unknown key")

    def number(
        self,
        section: Mapping,
        key: str,
        path: str,
        default: Optional[float] = None,
        minimum: Optional[float] = None,
        positive: bool = False,
        allow_inf: bool = False,
    ) -> Optional[float]:
        where = f"{path}.{key}" if path else key
        if key not in section:
            if default is None:
                self.error(where, "required key is missing")
            return default
        return self.check_number(section[key], where, minimum, positive, allow_inf)

    def check_number(
        self,
        value: Any,
        where: str,
        minimum: Optional[float] = None,
        positive: bool = False,
        allow_inf: bool = False,
    ) -> Optional[float]:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(where, f"must be a number, got {value!r}")
            return None
        value = float(value)
        if math.isnan(value) or (math.isinf(value) and not allow_inf):
            self.error(where, f"must be finite, got {value}")
            return None
        if positive and not value > 0:
            self.error(where, f"must be > 0, got {value}")
            return None
        if minimum is not None and value < minimum:
            self.error(where, f"must be >= {minimum}, got {value}")
            return None
        return value

    def integer(
        self,
        section: Mapping,
        key: str,
        path: str,
        default: Optional[int] = None,
        minimum: Optional[int] = None,
    ) -> Optional[int]:
        where = f"{path}.{key}" if path else key
        if key not in section:
            if default is None:
                self.error(where, "required key is missing")
            return default
        return self.check_integer(section[key], where, minimum)

    def check_integer(
        self, value: Any, where: str, minimum: Optional[int] = None
    ) -> Optional[int]:
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(where, f"must be an integer, got {value!r}")
            return None
        if minimum is not None and value < minimum:
            self.error(where, f"must be >= {minimum}, got {value}")
            return None
        return value

    def vector(
        self, section: Mapping, key: str, path: str, length: int, positive: bool = False
    ) -> Optional[Tuple[float, ...]]:
        where = f"{path}.{key}" if path else key
        if key not in section:
            self.error(where, "required key is missing")
            return None
        values = section[key]
        if not isinstance(values, list) or len(values) != length:
            self.error(where, f"must be a list of {length} numbers, got {values!r}")
            return None
        checked = [
            self.check_number(v, f"{where}[{i}]", positive=positive)
            for i, v in enumerate(values)
        ]
        if any(v is None for v in checked):
            return None
        return tuple(checked)

    def items(self, section: Mapping, key: str, path: str) -> List[Any]:
        where = f"{path}.{key}" if path else key
        values = section.get(key)
        if values is None:
            return []
        if not isinstance(values, list):
            self.error(where, f"must be a list, got {type(values).__name__}")
            return []
        return values


def _ion(check: _Checker, raw: Mapping) -> IonSpecies:
    if "ion" not in raw:
        return IonSpecies.sr88()
    section = check.mapping(raw["ion"], "ion")
    if section is None:
        return IonSpecies.sr88()
    check.unknown_keys(section, ("mass_u", "charge_e"), "ion")
    mass = check.number(section, "mass_u", "ion", positive=True)
    charge = check.number(section, "charge_e", "ion", default=1.0, positive=True)
    if mass is None or charge is None:
        return IonSpecies.sr88()
    return IonSpecies.from_mass_u(mass, charge)


def _drive(check: _Checker, raw: Mapping) -> Optional[RfDriveModel]:
    if "drive" not in raw:
        return None
    section = check.mapping(raw["drive"], "drive")
    if section is None:
        return None
    check.unknown_keys(section, ("secular_hz", "rf_axial_hz", "rf_drive_hz"), "drive")
    secular = check.vector(section, "secular_hz", "drive", 3, positive=True)
    rf_axial = check.number(section, "rf_axial_hz", "drive", default=0.0, minimum=0.0)
    rf_drive = check.number(section, "rf_drive_hz", "drive", positive=True)
    if secular is None or rf_axial is None or rf_drive is None:
        return None
    try:
        return RfDriveModel.calibrated(
            TrapSetting.from_hz("s=1", secular), TWO_PI * rf_drive, TWO_PI * rf_axial
        )
    except ValueError as error:
        check.error("drive", str(error))
        return None


def _settings(
    check: _Checker, raw: Mapping, drive: Optional[RfDriveModel]
) -> List[TrapSetting]:
    settings = []
    for index, entry in enumerate(check.items(raw, "settings", "")):
        path = f"settings[{index}]"
        section = check.mapping(entry, path)
        if section is None:
            continue
        check.unknown_keys(section, ("label", "secular_hz", "scale"), path)
        label = section.get("label")
        if not isinstance(label, str) or not label:
            check.error(f"{path}.label", "must be a non-empty string")
            continue
        if any(s.label == label for s in settings):
            check.error(f"{path}.label", f"duplicate trap setting '{label}'")
            continue

        if ("secular_hz" in section) == ("scale" in section):
            check.error(path, "give exactly one of secular_hz or scale")
            continue
        try:
            if "secular_hz" in section:
                secular = check.vector(section, "secular_hz", path, 3, positive=True)
                if secular is not None:
                    settings.append(TrapSetting.from_hz(label, secular))
            else:
                scale = check.number(section, "scale", path, positive=True)
                if drive is None:
                    check.error(f"{path}.scale", "a scaled setting needs a drive section")
                elif scale is not None:
                    settings.append(secular_from_scale(drive, scale, label))
        except DomainError as error:
            check.error(path, str(error))
    return settings


def _beams(check: _Checker, raw: Mapping) -> List[LaserBeam]:
    beams = []
    allowed = ("id", "wavelength_m", "azimuth_deg", "elevation_deg", "phase_offset_rad")
    for index, entry in enumerate(check.items(raw, "beams", "")):
        path = f"beams[{index}]"
        section = check.mapping(entry, path)
        if section is None:
            continue
        check.unknown_keys(section, allowed, path)
        beam_id = section.get("id")
        if not isinstance(beam_id, str) or not beam_id:
            check.error(f"{path}.id", "must be a non-empty string")
            continue
        if any(b.beam_id == beam_id for b in beams):
            check.error(f"{path}.id", f"duplicate beam '{beam_id}'")
            continue
        wavelength = check.number(section, "wavelength_m", path, positive=True)
        azimuth = check.number(section, "azimuth_deg", path)
        elevation = check.number(section, "elevation_deg", path, default=0.0)
        offset = check.number(section, "phase_offset_rad", path, default=0.0)
        if None in (wavelength, azimuth, elevation, offset):
            continue
        beams.append(
            beam_from_angles(
                beam_id,
                math.radians(azimuth),
                math.radians(elevation),
                wavelength,
                offset,
            )
        )
    return beams


def _noise(check: _Checker, raw: Mapping) -> NoiseModel:
    if "noise" not in raw:
        return NoiseModel()
    section = check.mapping(raw["noise"], "noise")
    if section is None:
        return NoiseModel()
    allowed = (
        "t2_s",
        "area_error_even",
        "area_error_odd",
        "detuning_hz",
        "projection_sampling",
        "dephase_during_pulses",
    )
    check.unknown_keys(section, allowed, "noise")
    t2 = check.number(
        section, "t2_s", "noise", default=math.inf, positive=True, allow_inf=True
    )
    even = check.number(section, "area_error_even", "noise", default=1.0, minimum=0.0)
    odd = check.number(section, "area_error_odd", "noise", default=1.0, minimum=0.0)
    detuning = check.number(section, "detuning_hz", "noise", default=0.0)
    flags = {}
    for key in ("projection_sampling", "dephase_during_pulses"):
        flags[key] = section.get(key, True)
        if not isinstance(flags[key], bool):
            check.error(f"noise.{key}", f"must be true or false, got {flags[key]!r}")
    if None in (t2, even, odd, detuning):
        return NoiseModel()
    return NoiseModel(
        t2,
        even,
        odd,
        TWO_PI * detuning,
        bool(flags["projection_sampling"]),
        bool(flags["dephase_during_pulses"]),
    )


def _schedule(
    check: _Checker,
    raw: Mapping,
    settings: List[TrapSetting],
    beams: List[LaserBeam],
) -> Optional[Schedule]:
    if "schedule" not in raw:
        return None
    section = check.mapping(raw["schedule"], "schedule")
    if section is None:
        return None
    allowed = (
        "M",
        "shots",
        "theta_T_rad",
        "pi_time_s",
        "inter_pulse_wait_s",
        "settings",
        "beams",
    )
    check.unknown_keys(section, allowed, "schedule")

    lengths = section.get("M")
    M = []
    if not isinstance(lengths, list) or not lengths:
        check.error(
            "schedule.M", f"must be a non-empty list of integers, got {lengths!r}"
        )
    else:
        M = [check.check_integer(m, f"schedule.M[{i}]", 1) for i, m in enumerate(lengths)]

    shots = check.integer(section, "shots", "schedule", minimum=1)
    if shots is not None and shots % 2:
        check.error("schedule.shots", f"must be even, got {shots}")

    thetas = [
        check.check_number(t, f"schedule.theta_T_rad[{i}]")
        for i, t in enumerate(check.items(section, "theta_T_rad", "schedule"))
    ]
    pi_time = check.number(
        section, "pi_time_s", "schedule", DEFAULT_PI_TIME, positive=True
    )
    wait = check.number(
        section, "inter_pulse_wait_s", "schedule", DEFAULT_WAIT, minimum=0.0
    )

    labels = {s.label for s in settings}
    used_settings = check.items(section, "settings", "schedule")
    for i, label in enumerate(used_settings):
        if label not in labels:
            check.error(f"schedule.settings[{i}]", f"unknown trap setting '{label}'")
    ids = {b.beam_id for b in beams}
    used_beams = check.items(section, "beams", "schedule")
    for i, beam_id in enumerate(used_beams):
        if beam_id not in ids:
            check.error(f"schedule.beams[{i}]", f"unknown beam id '{beam_id}'")

    if None in M or None in thetas or None in (shots, pi_time, wait):
        return None
    return Schedule(
        tuple(M),
        shots,
        tuple(thetas),
        pi_time,
        wait,
        tuple(str(s) for s in used_settings),
        tuple(str(b) for b in used_beams),
    )


def _electrodes(check: _Checker, raw: Mapping) -> Optional[ElectrodeGeometry]:
    if "electrodes" not in raw:
        return None
    section = check.mapping(raw["electrodes"], "electrodes")
    if section is None:
        return None
    check.unknown_keys(section, ("field_per_volt_v_per_m",), "electrodes")
    where = "electrodes.field_per_volt_v_per_m"
    rows = section.get("field_per_volt_v_per_m")
    if not isinstance(rows, list) or len(rows) != 3:
        check.error(where, "must list 3 rows, one per axis")
        return None
    if not all(isinstance(r, list) and r and len(r) == len(rows[0]) for r in rows):
        check.error(where, "rows must be non-empty lists of equal length")
        return None
    matrix = [
        [check.check_number(v, f"{where}[{i}][{j}]") for j, v in enumerate(row)]
        for i, row in enumerate(rows)
    ]
    if any(v is None for row in matrix for v in row):
        return None
    try:
        return ElectrodeGeometry(matrix)
    except DomainError as error:
        check.error(where, str(error))
        return None


def _drift(check: _Checker, raw: Mapping) -> DriftModel:
    if "drift" not in raw:
        return DriftModel()
    section = check.mapping(raw["drift"], "drift")
    if section is None:
        return DriftModel()
    allowed = ("field_rate_v_per_m_per_rt_s", "voltage_noise_v")
    check.unknown_keys(section, allowed, "drift")
    rate = check.number(section, allowed[0], "drift", default=0.0, minimum=0.0)
    voltage = check.number(section, allowed[1], "drift", default=0.0, minimum=0.0)
    if rate is None or voltage is None:
        return DriftModel()
    return DriftModel(rate, voltage)


def _resonator(check: _Checker, raw: Mapping) -> Optional[ResonatorParams]:
    if "resonator" not in raw:
        return None
    section = check.mapping(raw["resonator"], "resonator")
    if section is None:
        return None
    check.unknown_keys(section, ("tau_s", "resonance_hz", "q"), "resonator")
    tau = check.number(section, "tau_s", "resonator", positive=True)
    resonance = None
    if "resonance_hz" in section:
        resonance = check.number(section, "resonance_hz", "resonator", positive=True)
        resonance = TWO_PI * resonance if resonance is not None else None
    Q = check.number(section, "q", "resonator", positive=True) if "q" in section else None
    if tau is None:
        return None
    try:
        return ResonatorParams(tau, resonance, Q)
    except ValueError as error:
        check.error("resonator", str(error))
        return None


def validate_config(text: str) -> ScenarioConfig:
    """
    Parse and validate a YAML scenario config

    :param text: Contents of the config file
    :return: The validated config
    :raises ConfigInvalid: Listing every violation found
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as error:
        raise ConfigInvalid([f"not valid YAML: {error}"]) from error
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigInvalid([f"top level must be a mapping, got {type(raw).__name__}"])

    check = _Checker()
    for key in REQUIRED_KEYS:
        if key not in raw:
            check.error(key, "required key is missing")
    check.unknown_keys(raw, REQUIRED_KEYS + OPTIONAL_KEYS, "")

    if "schema_version" in raw and raw["schema_version"] != SCHEMA_VERSION:
        check.error(
            "schema_version",
            f"unsupported version {raw['schema_version']!r}, expected {SCHEMA_VERSION}",
        )
    scenario = raw.get("scenario")
    if "scenario" in raw and scenario not in SCENARIO_NAMES:
        check.error("scenario", f"unknown scenario {scenario!r}")
    seed = check.integer(raw, "seed", "", minimum=0) if "seed" in raw else None

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        check.error("output", "must be a path string")

    estimator = raw.get("estimator", "arcsin")
    if estimator not in ESTIMATORS:
        choices = ", ".join(ESTIMATORS)
        check.error("estimator", f"must be one of {choices}, got {estimator!r}")

    ion = _ion(check, raw)
    drive = _drive(check, raw)
    settings = _settings(check, raw, drive)
    beams = _beams(check, raw)
    noise = _noise(check, raw)
    schedule = _schedule(check, raw, settings, beams)
    geometry = _electrodes(check, raw)
    drift = _drift(check, raw)
    resonator = _resonator(check, raw)

    params = raw.get("params", {})
    if not isinstance(params, dict):
        check.error("params", "must be a mapping")
        params = {}

    if check.errors:
        raise ConfigInvalid(check.errors)

    logger.debug("Validated config for scenario '%s'", scenario)
    return ScenarioConfig(
        scenario=scenario,
        seed=seed,
        ion=ion,
        settings=tuple(settings),
        beams=tuple(beams),
        schedule=schedule,
        noise=noise,
        estimator=estimator,
        drive=drive,
        geometry=geometry,
        drift=drift,
        resonator=resonator,
        params=dict(params),
        output=output,
        raw=raw,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    with open(path) as fd:
        return validate_config(fd.read())


def default_config_text(name: str) -> str:
    """
    Text of the config bundled for scenario ``name``

    :raises ScenarioUnknown: If no such scenario exists
    """
    if name not in SCENARIO_NAMES:
        raise ScenarioUnknown(name)
    with open_text("trapcal.configs", f"{name}.yaml") as f:
        return f.read()


def load_default_config(name: str) -> ScenarioConfig:
    return validate_config(default_config_text(name))


def default_output_dir(config: ScenarioConfig, environ: Dict[str, str]) -> Path:
    """
    Where a run writes when no ``--out`` is given: the config's ``output``, else
    ``$TRAPCAL_OUTPUT_DIR``, else ``./trapcal-output/<scenario>``
    """
    if config.output:
        return Path(config.output)
    if environ.get(OUTPUT_ENV):
        return Path(environ[OUTPUT_ENV])
    return Path("trapcal-output") / config.scenario
