from dataclasses import replace
import logging
import math

import numpy as np

from trapcal.compensation import (
    ElectrodeGeometry,
    HybridConfig,
    Observable,
    hybrid_2d_minimize,
    sensitivity_angle,
)
from trapcal.errors import IonLost, NoProgress
from trapcal.pulses import NoiseModel, TrapContext
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import (
    RfDriveModel,
    StrayField,
    secular_from_scale,
    sensitivity_direction,
)

logger = logging.getLogger(__name__)


def radial_directions(model: RfDriveModel, scale: float, beams):
    """
    Method A sensitivity directions of each beam between RF scale 1 and ``scale``
    """
    setting_a = secular_from_scale(model, 1.0, "A")
    setting_b = secular_from_scale(model, scale, "B")
    return [sensitivity_direction("A", [beam], setting_a, setting_b)[1] for beam in beams]


class Geometry2DScenario(Scenario):
    """
    Radial sensitivity directions of two beams as the RF amplitude of setting B
    drops, for the configured radial frequencies and for a trap with degenerate
    radial frequencies. Then the single-beam hybrid scheme on random 2D fields.

    Parameters (``params``):
        ``scales``: RF scales of setting B, default [0.9 .. 0.43]
        ``hybrid_scale``: RF scale of setting B in the hybrid runs, default 0.6
        ``hybrid_trials``: number of random fields, default 10
        ``hybrid_field_v_per_m``: largest field component, default 1.0
        ``sideband_noise``: noise on each sideband reading, default 0
        ``max_iterations``: hybrid iterations before giving up, default 100

    Phases in the hybrid runs are read without projection noise.
    """

    name = "geometry-2d"

    def run(self) -> ScenarioResult:
        self.require("drive")
        config = self.config
        drive = config.drive
        alpha, beta = (config.context.beam(b) for b in config.schedule.beams[:2])

        mean_pseudo = float(np.mean(drive.pseudo_radial))
        degenerate = RfDriveModel(
            (mean_pseudo, mean_pseudo), drive.static_axial, drive.rf_drive_freq
        )
        directions = Table(
            ["s_B", "d1x", "d1y", "d2x", "d2y", "angle_deg", "degenerate_angle_deg"]
        )
        scales = self.param("scales", [0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.43])
        angles = []
        for scale in scales:
            try:
                d1, d2 = radial_directions(drive, scale, [alpha, beta])
                e1, e2 = radial_directions(degenerate, scale, [alpha, beta])
            except IonLost as error:
                logger.warning("Skipping s_B=%g: %s", scale, error)
                continue
            angle = sensitivity_angle(d1[:2], d2[:2])
            angles.append(angle)
            directions.append(
                scale,
                d1[0],
                d1[1],
                d2[0],
                d2[1],
                angle,
                sensitivity_angle(e1[:2], e2[:2]),
            )

        hybrid = self._hybrid(drive, alpha.beam_id)
        finals = np.array(hybrid.column("final_field_v_per_m"), dtype=float)
        converged = finals[np.isfinite(finals)]
        metrics = {
            "critical_scale": drive.critical_scale(int(np.argmin(drive.pseudo_radial))),
            "degenerate_angle_deg": directions.column("degenerate_angle_deg"),
            "collapsed_angle_deg": angles[-1] if angles else None,
            "hybrid_converged": int(converged.size),
            "hybrid_max_final_field_v_per_m": (
                float(converged.max()) if converged.size else None
            ),
        }
        return ScenarioResult({"directions": directions, "hybrid": hybrid}, metrics)

    def _hybrid(self, drive: RfDriveModel, beam_id: str) -> Table:
        config = self.config
        scale = float(self.param("hybrid_scale", 0.6))
        settings = [
            secular_from_scale(drive, 1.0, "A"),
            secular_from_scale(drive, scale, "B"),
        ]
        context = TrapContext.build(config.ion, settings, config.beams)
        geometry = config.geometry or ElectrodeGeometry(np.eye(3)[:, :2])
        observable = Observable("A", (beam_id,), "A", "B", config.schedule.M[0])
        loop = replace(
            self.loop_config([observable], geometry, context=context),
            noise=NoiseModel(projection_sampling=False, dephase_during_pulses=False),
        )
        hybrid = HybridConfig(
            loop,
            interferometry_electrode=0,
            sideband_electrode=1,
            rf_drive_freq=drive.rf_drive_freq,
            sideband_noise=float(self.param("sideband_noise", 0.0)),
            max_iterations=int(self.param("max_iterations", 100)),
            pseudo=tuple(drive.pseudo_frequencies(1.0)),
        )

        table = Table(
            [
                "trial",
                "Ex0",
                "Ey0",
                "Ex_final",
                "Ey_final",
                "final_field_v_per_m",
                "phase_rad",
                "sideband",
                "interferometric_updates",
                "sideband_searches",
                "iterations",
            ]
        )
        rng = self.rng(stream=f"{self.name}/hybrid")
        bound = float(self.param("hybrid_field_v_per_m", 1.0))
        for trial in range(int(self.param("hybrid_trials", 10))):
            ex, ey = rng.uniform(-bound, bound, size=2)
            try:
                result = hybrid_2d_minimize(hybrid, StrayField((ex, ey, 0.0)), rng)
            except NoProgress as error:
                logger.warning("Hybrid trial %d: %s", trial, error)
                table.append(trial, ex, ey, *([math.nan] * 5), 0, 0, 0)
                continue
            final = result.final_field
            table.append(
                trial,
                ex,
                ey,
                final[0],
                final[1],
                float(np.linalg.norm(final[:2])),
                result.phase,
                result.sideband,
                result.interferometric_updates,
                result.sideband_searches,
                result.iterations,
            )
        return table


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = Geometry2DScenario(load_default_config("geometry-2d")).run()
    print(result.metrics)
