from dataclasses import replace
import logging

import numpy as np

from trapcal.compensation import (
    Observable,
    calibrate_gradient_matrix,
    closed_loop_run,
    fit_gradients,
)
from trapcal.errors import ConfigInvalid
from trapcal.pulses import TrapContext
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import RfDriveModel, StrayField, secular_from_scale

logger = logging.getLogger(__name__)

ZERO_SLOPE_TOLERANCE = 1e-9


class AxialScenario(Scenario):
    """
    Method A along the trap axis. With an RF contribution to the axial
    confinement, changing the RF amplitude moves an ion pushed along the axis,
    so an axial beam can null the axial field. Without it the phase does not
    respond at all.

    Both trap settings must be given by RF ``scale``.

    Parameters (``params``):
        ``field_v_per_m``: initial axial field, default 2.0
        ``duration_s``: default 500
        ``update_interval_s``: default 10
        ``scan_amplitude_v``: default 0.2
    """

    name = "axial"

    def _context(self, drive: RfDriveModel) -> TrapContext:
        config = self.config
        settings = []
        for label in config.schedule.settings[:2]:
            scale = self.setting_scale(label)
            if scale is None:
                raise ConfigInvalid([f"settings.{label}: must be given by scale"])
            settings.append(secular_from_scale(drive, float(scale), label))
        return TrapContext.build(config.ion, settings, config.beams)

    def run(self) -> ScenarioResult:
        self.require("drive", "geometry")
        config = self.config
        drive = config.drive
        if drive.rf_axial <= 0:
            raise ConfigInvalid(["drive.rf_axial_hz: must be positive"])
        if config.geometry.n_electrodes != 1:
            raise ConfigInvalid(["electrodes: the axial loop uses a single electrode"])

        schedule = config.schedule
        setting_a, setting_b = schedule.settings[:2]
        observable = Observable(
            "A", (schedule.beams[0],), setting_a, setting_b, schedule.M[0]
        )
        context = self._context(drive)
        loop = self.loop_config([observable], config.geometry, context=context)
        amplitude = float(self.param("scan_amplitude_v", 0.2))
        gradient = calibrate_gradient_matrix(loop, StrayField(), amplitude)

        flat = replace(loop, context=self._context(replace(drive, rf_axial=0.0)))
        flat_slopes, _ = fit_gradients(flat, StrayField(), amplitude)
        flat_slope = float(flat_slopes[0, 0])

        initial = float(self.param("field_v_per_m", 2.0))
        result = closed_loop_run(
            loop,
            gradient,
            StrayField((0.0, 0.0, initial)),
            float(self.param("duration_s", 500.0)),
            float(self.param("update_interval_s", 10.0)),
            config.drift,
            self.rng(),
            rf_drive_freq=drive.rf_drive_freq,
            rf_pseudo=drive.pseudo_frequencies(1.0),
        )
        final = float(abs(result.field_true[-1][2]))
        logger.info("Axial field %.3g -> %.3g V/m", initial, final)

        metrics = {
            "gradient_rad_per_v": float(gradient.matrix[0, 0]),
            "initial_axial_field_v_per_m": abs(initial),
            "final_axial_field_v_per_m": final,
            "zero_rf_axial_slope_rad_per_v": flat_slope,
            "zero_slope": bool(abs(flat_slope) < ZERO_SLOPE_TOLERANCE),
            "final_rf_field_v_per_m": float(result.samples[-1].rf_field),
        }
        return ScenarioResult(
            {"timeseries": Table(result.columns(), result.rows())}, metrics
        )


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = AxialScenario(load_default_config("axial")).run()
    print(result.metrics)
