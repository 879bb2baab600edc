import logging
import math
from typing import Optional, Sequence

import numpy as np

from trapcal.compensation import fit_power_law
from trapcal.errors import ConfigInvalid
from trapcal.estimators import (
    RpeSchedule,
    heisenberg_schedule,
    rms,
    rpe_estimate,
    rpe_schedule,
    sql_bound,
)
from trapcal.montecarlo import MonteCarlo
from trapcal.pulses import NoiseModel, expected_contrast, method_a_sequence
from trapcal.scenario import Scenario, ScenarioResult, Table
from trapcal.trap import wrap_phase

logger = logging.getLogger(__name__)


class RpeMonteCarlo(MonteCarlo[float]):
    """
    Error of the binary-search estimate of a uniformly drawn per-length phase

    :param schedule: Pass counts
    :param contrasts: Fringe contrast of each pass, default 1
    """

    def __init__(
        self,
        schedule: RpeSchedule,
        contrasts: Optional[Sequence[float]] = None,
        random_seed: int = 42,
        stream: str = "rpe",
    ):
        super().__init__(random_seed, stream)
        self.schedule = schedule
        self.contrasts = contrasts

    def trial(self, rng: np.random.Generator, index: int) -> float:
        phi = rng.uniform(-math.pi, math.pi)
        estimate, _ = rpe_estimate(self.schedule, phi, self.contrasts, rng)
        return float(wrap_phase(estimate - phi))


class RpeScalingScenario(Scenario):
    """
    RMS error of the binary search against total pulse area, compared with
    the standard quantum limit

    ``schedule.M`` lists the lengths of the longest pass, powers of two. Each
    one gives a schedule with passes of length 1, 2, ..., M.

    Parameters (``params``):
        ``per_pass``: measurements per pass, default ``schedule.shots``
        ``trials``: Monte Carlo trials per point, default 2000
        ``schedule``: ``equal`` or ``heisenberg``
        ``growth``: extra measurements per earlier pass for ``heisenberg``, default 2
        ``t2_s``: coherence time of the finite-T2 column, default 5e-4
    """

    name = "rpe-scaling"

    def _schedule(self, j_max: int, per_pass: int) -> RpeSchedule:
        if self.param("schedule", "equal") == "heisenberg":
            return heisenberg_schedule(j_max, per_pass, int(self.param("growth", 2)))
        return rpe_schedule(j_max, per_pass)

    def _contrasts(self, schedule: RpeSchedule, noise: NoiseModel):
        config = self.config
        setting_a, setting_b = config.schedule.settings[:2]
        return [
            expected_contrast(
                method_a_sequence(
                    length,
                    config.schedule.beams[0],
                    setting_a,
                    setting_b,
                    pi_time=config.schedule.pi_time,
                    wait=config.schedule.wait,
                ),
                noise,
            )
            for length in schedule.lengths
        ]

    def run(self) -> ScenarioResult:
        config = self.config
        per_pass = int(self.param("per_pass", config.schedule.shots))
        trials = int(self.param("trials", 2000))
        dephasing = NoiseModel(
            t2=float(self.param("t2_s", 5e-4)), dephase_during_pulses=False
        )

        lengths = sorted(config.schedule.M)
        bad = [M for M in lengths if M & (M - 1)]
        if bad:
            raise ConfigInvalid([f"schedule.M: {M} is not a power of two" for M in bad])

        table = Table(
            ["j_max", "total_area_rad", "rms_error_rad", "rms_error_t2_rad", "sql_rad"]
        )
        for M in lengths:
            j_max = M.bit_length()
            schedule = self._schedule(j_max, per_pass)
            stream = f"{self.name}/j={j_max}"
            ideal = RpeMonteCarlo(schedule, None, config.seed, stream)
            finite = RpeMonteCarlo(
                schedule,
                self._contrasts(schedule, dephasing),
                config.seed,
                stream + "/t2",
            )
            error = rms(ideal(trials, self.n_jobs))
            error_t2 = rms(finite(trials, self.n_jobs))
            area = schedule.total_area()
            table.append(j_max, area, error, error_t2, sql_bound(area))
            logger.info(
                "j_max=%d: rms %.4g rad, SQL %.4g rad", j_max, error, sql_bound(area)
            )

        areas = np.array(table.column("total_area_rad"))
        errors = np.array(table.column("rms_error_rad"))
        sql = np.array(table.column("sql_rad"))
        errors_t2 = np.array(table.column("rms_error_t2_rad"))
        exponent = None
        if len(areas) >= 2:
            exponent, _ = fit_power_law(areas, errors)
        metrics = {
            "fitted_exponent": exponent,
            "error_over_sql": (errors / sql).tolist(),
            "t2_degraded": bool(np.all(errors_t2 >= errors)),
            "t2_ratio_at_longest": float(errors_t2[-1] / errors[-1]),
        }
        return ScenarioResult({"scaling": table}, metrics)


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = RpeScalingScenario(load_default_config("rpe-scaling")).run()
    print(result.metrics)
