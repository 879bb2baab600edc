import logging

import numpy as np

from trapcal.compensation import (
    Observable,
    allan_style_deviation,
    analytic_gradient_matrix,
    calibrate_gradient_matrix,
    closed_loop_run,
    duty_cycle_report,
    fit_power_law,
    method_a_schedule,
)
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import StrayField

logger = logging.getLogger(__name__)


class ClosedLoopScenario(Scenario):
    """
    Two-beam Method A compensation of the radial stray field

    One Method A observable per scheduled beam, a gradient matrix calibrated by
    voltage scans, then the loop against projection noise and the configured
    drift. The stability of the loop is read from the overlapping deviation of
    the per-interval stray field estimates.

    Parameters (``params``):
        ``field_v_per_m``: initial stray field, default [0.5, -0.3, 0.0]
        ``duration_s``: default 5000
        ``update_interval_s``: default 10
        ``calibration``: ``measured`` (voltage scans) or ``analytic``
        ``scan_amplitude_v``: default 0.2
        ``scan_points``: default 5
        ``fit_max_tau_s``: longest averaging time in the power-law fit, default all
        ``shot_overhead_s``: cooling and detection time per shot, default 1e-3
    """

    name = "closed-loop"

    def run(self) -> ScenarioResult:
        self.require("geometry")
        config = self.config
        schedule = config.schedule
        setting_a, setting_b = schedule.settings[:2]
        M = schedule.M[0]
        observables = [
            Observable("A", (beam_id,), setting_a, setting_b, M)
            for beam_id in schedule.beams
        ]
        loop = self.loop_config(observables, config.geometry)

        if self.param("calibration", "measured") == "analytic":
            gradient = analytic_gradient_matrix(loop)
        else:
            gradient = calibrate_gradient_matrix(
                loop,
                StrayField(),
                float(self.param("scan_amplitude_v", 0.2)),
                int(self.param("scan_points", 5)),
            )

        rf_drive_freq = rf_pseudo = None
        if config.drive is not None:
            rf_drive_freq = config.drive.rf_drive_freq
            rf_pseudo = config.drive.pseudo_frequencies(1.0)

        interval = float(self.param("update_interval_s", 10.0))
        result = closed_loop_run(
            loop,
            gradient,
            StrayField(tuple(self.param("field_v_per_m", [0.5, -0.3, 0.0]))),
            float(self.param("duration_s", 5000.0)),
            interval,
            config.drift,
            self.rng(),
            rf_drive_freq=rf_drive_freq,
            rf_pseudo=rf_pseudo,
        )

        timeseries = Table(result.columns(), result.rows())
        radial = result.stray_estimates()[:, :2]
        taus, deviations = allan_style_deviation(radial, interval)
        deviation = Table(["tau_s", "deviation_v_per_m"])
        for tau, value in zip(taus, deviations):
            deviation.append(tau, value)

        fit_max = float(self.param("fit_max_tau_s", taus[-1]))
        window = (taus <= fit_max) & (deviations > 0)
        exponent = prefactor = None
        if np.count_nonzero(window) >= 2:
            exponent, prefactor = fit_power_law(taus[window], deviations[window])
        best = int(np.argmin(deviations))
        final = result.field_true[-1]

        logger.info("Deviation exponent %s, minimum at %.0f s", exponent, taus[best])
        metrics = {
            "gradient_matrix_rad_per_v": gradient.matrix.tolist(),
            "fitted_exponent": exponent,
            "fitted_prefactor_v_per_m": prefactor,
            "min_deviation_v_per_m": float(deviations[best]),
            "min_deviation_tau_s": float(taus[best]),
            "final_2d_field_v_per_m": float(np.linalg.norm(final[:2])),
        }
        s_b = self.setting_scale(setting_b)
        if s_b is not None:
            duty = duty_cycle_report(
                method_a_schedule(
                    M,
                    float(s_b),
                    schedule.pi_time,
                    schedule.wait,
                    float(self.param("shot_overhead_s", 1e-3)),
                )
            )
            metrics["rf_reduced_fraction"] = duty.reduced_fraction
            metrics["rf_mean_power"] = duty.mean_power
            metrics["rf_balanced_mean_power"] = duty.balanced_mean
        return ScenarioResult({"timeseries": timeseries, "deviation": deviation}, metrics)
