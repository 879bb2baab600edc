from dataclasses import replace
import logging
import math

import numpy as np

from trapcal.compensation import Observable, measure_method_b_pair
from trapcal.pulses import TrapContext
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import StrayField, sensitivity_direction, wrap_phase

logger = logging.getLogger(__name__)


class MethodBDriftScenario(Scenario):
    """
    Method B under a drifting optical path between the two beams

    The drift shifts the phase of beam beta at the ion by the same amount in
    both trap settings. phi_PD^A and phi_PD^B follow it, their difference does
    not.

    Parameters (``params``):
        ``field_v_per_m``: stray field, default [1.0, 0.5, 0.0]
        ``n_steps``: measurements, default 50
        ``step_s``: time between measurements, default 1.0
        ``path_drift_rad_per_rt_s``: random-walk rate of the path phase, default 0.5
    """

    name = "method-b-drift"

    def run(self) -> ScenarioResult:
        config = self.config
        schedule = config.schedule
        M = schedule.M[0]
        alpha, beta = schedule.beams[:2]
        setting_a, setting_b = schedule.settings[:2]
        field = StrayField(tuple(self.param("field_v_per_m", [1.0, 0.5, 0.0])))
        n_steps = int(self.param("n_steps", 50))
        step = float(self.param("step_s", 1.0))
        rate = float(self.param("path_drift_rad_per_rt_s", 0.5))

        # arcsin folds phases beyond +/-pi/2, which a drifting path crosses
        estimator = "arctan2" if config.estimator == "arcsin" else config.estimator
        observable = Observable("B", (alpha, beta), setting_a, setting_b, M)
        loop = self.loop_config([observable], estimator=estimator)

        context = config.context
        d, _ = sensitivity_direction(
            "B",
            [context.beam(alpha), context.beam(beta)],
            context.setting(setting_a),
            context.setting(setting_b),
        )
        expected = float(
            wrap_phase(M * config.ion.charge_to_mass * float(np.dot(d, field.vector)))
        ) / M

        rng = self.rng()
        drift = 0.0
        table = Table(
            [
                "t_s",
                "common_offset_rad",
                "phi_pd_A_rad",
                "phi_pd_B_rad",
                "difference_rad",
            ]
        )
        for k in range(n_steps):
            if k:
                drift += rate * math.sqrt(step) * rng.normal()
            beams = dict(context.beams)
            beams[beta] = beams[beta].with_phase_offset(beams[beta].phase_offset + drift)
            drifted = replace(
                loop, context=TrapContext(context.ion, context.settings, beams)
            )
            at_a, at_b, difference = measure_method_b_pair(
                drifted, observable, field, rng
            )
            table.append(
                k * step,
                float(wrap_phase(drift)),
                at_a.value,
                at_b.value,
                difference.value,
            )

        differences = np.array(table.column("difference_rad"))
        spread = float(differences.max() - differences.min())
        logger.info("phi_PD^A - phi_PD^B spread %.3g rad over %d steps", spread, n_steps)
        metrics = {
            "difference_spread_rad": spread,
            "difference_mean_rad": float(differences.mean()),
            "difference_expected_rad": expected,
            "phi_pd_A_spread_rad": float(np.ptp(table.column("phi_pd_A_rad"))),
            "estimator": estimator,
        }
        return ScenarioResult({"drift": table}, metrics)
