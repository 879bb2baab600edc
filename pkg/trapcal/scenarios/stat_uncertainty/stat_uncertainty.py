import logging
import math

import numpy as np

from trapcal.estimators import ArctanMonteCarlo, rms
from trapcal.scenario import Scenario, ScenarioResult, Table

logger = logging.getLogger(__name__)

# RMS error of the arctan2 estimator over uniformly distributed phases, times sqrt(N)
UNIFORM_PHASE_LAW = 1.24


class StatUncertaintyScenario(Scenario):
    """
    Projection-noise error of the arctan2 estimators

    ``summary`` averages over phases drawn uniformly from [-pi, pi) and compares
    with ``1.24 / sqrt(N)``. ``curve`` fixes phi_T and shows where the estimator
    is most precise for small and large N. Around phi_T = 0 the error has a local
    minimum for small N and a local maximum for large N.

    Parameters (``params``):
        ``N_values``: measurements per estimate, default [20, 40, 80]
        ``trials``: Monte Carlo trials per point, default 10000
        ``curve_N``: default [6, 40]
        ``curve_phases``: phi_T values of the curve, default 17 points over [-pi/2, pi/2]
        ``offset``: also run the pi/4, 3pi/4 variant, default false
    """

    name = "stat-uncertainty"

    def run(self) -> ScenarioResult:
        trials = int(self.param("trials", 10000))
        seed = self.config.seed
        variants = [False, True] if self.param("offset", False) else [False]

        summary = Table(["estimator", "N", "rms_error_rad", "law_rad"])
        ratios = {}
        for offset in variants:
            estimator = "arctan2_offset" if offset else "arctan2"
            for N in self.param("N_values", [20, 40, 80]):
                simulation = ArctanMonteCarlo(
                    int(N),
                    offset=offset,
                    random_seed=seed,
                    stream=f"{self.name}/{estimator}/N={N}",
                )
                error = rms(simulation(trials, self.n_jobs))
                law = UNIFORM_PHASE_LAW / math.sqrt(N)
                summary.append(estimator, N, error, law)
                ratios[f"{estimator}/N={N}"] = error / law
                logger.info(
                    "%s N=%d: rms %.4f rad, law %.4f rad", estimator, N, error, law
                )

        curve = Table(["estimator", "N", "phi_T_rad", "rms_error_rad"])
        phases = self.param(
            "curve_phases", np.linspace(-math.pi / 2, math.pi / 2, 17).tolist()
        )
        minima = {}
        at_zero = {}
        for N in self.param("curve_N", [6, 40]):
            errors = []
            for phi_T in phases:
                simulation = ArctanMonteCarlo(
                    int(N),
                    phi_T=float(phi_T),
                    random_seed=seed,
                    stream=f"{self.name}/curve/N={N}/phi={float(phi_T)!r}",
                )
                error = rms(simulation(trials, self.n_jobs))
                errors.append(error)
                curve.append("arctan2", N, phi_T, error)
            minima[str(N)] = float(phases[int(np.argmin(errors))])
            at_zero[str(N)] = _extremum_at_zero(phases, errors)

        metrics = {
            "ratio_to_law": ratios,
            "most_precise_phi_T_rad": minima,
            "extremum_at_zero": at_zero,
        }
        return ScenarioResult({"summary": summary, "curve": curve}, metrics)


def _extremum_at_zero(phases, errors) -> str:
    """
    "minimum" or "maximum" if the error at the phase nearest 0 beats both
    neighbours, else "neither"
    """
    index = int(np.argmin(np.abs(phases)))
    if index == 0 or index == len(errors) - 1:
        return "neither"
    here, left, right = errors[index], errors[index - 1], errors[index + 1]
    if here < min(left, right):
        return "minimum"
    if here > max(left, right):
        return "maximum"
    return "neither"


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = StatUncertaintyScenario(load_default_config("stat-uncertainty")).run()
    print(result.metrics)
