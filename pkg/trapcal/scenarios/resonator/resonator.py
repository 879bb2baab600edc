import logging
import math

import numpy as np

from trapcal.errors import ConfigInvalid
from trapcal.resonator import (
    ServoMode,
    SourceSwitch,
    dropout_depth,
    envelope,
    settle_time,
)
from trapcal.scenario import Scenario, ScenarioResult, Table

logger = logging.getLogger(__name__)

MICROSECOND = 1e-6


class ResonatorScenario(Scenario):
    """
    RF envelope when the drive hops from one source to a weaker one with a
    different phase, for several phase differences

    Parameters (``params``):
        ``delta_phis``: phase of source 2 relative to source 1, default
        [0, pi/4, pi/2, 3pi/4, pi]
        ``A2``: amplitude of source 2, default 0.7
        ``t_switch_us``, ``t_revert_us``: switching times, default 0 and never
        ``t_end_us``: default 100
        ``points``: samples of each envelope, default 501
        ``floor``: envelope below which the ion is at risk, default 0.1
        ``tolerance``: settling band as a fraction of the step, default 0.05
        ``mode``: ``switched``, ``stabilized`` or ``ramped``
        ``ramp_time_us``: ramp length in ``ramped`` mode, default tau
        ``source_gain_error``: default 0
    """

    name = "resonator"

    def run(self) -> ScenarioResult:
        self.require("resonator")
        params = self.config.resonator
        try:
            mode = ServoMode(self.param("mode", "switched"))
        except ValueError:
            modes = ", ".join(m.value for m in ServoMode)
            raise ConfigInvalid([f"params.mode: must be one of {modes}"]) from None
        gain_error = float(self.param("source_gain_error", 0.0))
        ramp_time = self.param("ramp_time_us")
        ramp_time = float(ramp_time) * MICROSECOND if ramp_time is not None else None
        floor = float(self.param("floor", 0.1))
        tolerance = float(self.param("tolerance", 0.05))
        t_revert = self.param("t_revert_us")
        t_revert = float(t_revert) * MICROSECOND if t_revert is not None else math.inf

        times = np.linspace(
            0.0,
            float(self.param("t_end_us", 100.0)) * MICROSECOND,
            int(self.param("points", 501)),
        )
        delta_phis = self.param(
            "delta_phis", [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi]
        )

        envelopes = Table(["dphi_rad", "t_us", "re_b", "im_b", "abs_b"])
        dropouts = Table(
            ["dphi_rad", "minimum", "time_us", "ion_loss_risk", "settle_time_us"]
        )
        crossing = None
        for delta_phi in delta_phis:
            switch = SourceSwitch(
                A2=float(self.param("A2", 0.7)),
                delta_phi=float(delta_phi),
                t_switch=float(self.param("t_switch_us", 0.0)) * MICROSECOND,
                t_revert=t_revert,
            )
            b = envelope(params, switch, times, mode, gain_error, ramp_time)
            for t, value in zip(times, b):
                envelopes.append(
                    delta_phi, t / MICROSECOND, value.real, value.imag, abs(value)
                )

            dropout = dropout_depth(params, switch, floor, mode, gain_error, ramp_time)
            settled = settle_time(params, switch, tolerance, mode, gain_error, ramp_time)
            dropouts.append(
                delta_phi,
                dropout.minimum,
                dropout.time / MICROSECOND,
                dropout.ion_loss_risk,
                settled / MICROSECOND,
            )
            if dropout.minimum < 1e-12 and math.isfinite(dropout.time):
                crossing = (dropout.time - switch.t_switch) / params.tau
            logger.info(
                "dphi=%.3f: minimum |b| %.3g at %.3g us",
                delta_phi,
                dropout.minimum,
                dropout.time / MICROSECOND,
            )

        settle_times = dropouts.column("settle_time_us")
        metrics = {
            "tau_us": params.tau / MICROSECOND,
            "mode": mode.value,
            "zero_crossing_over_tau": crossing,
            "settle_time_us": settle_times[0] if settle_times else None,
            "ion_loss_risk": any(dropouts.column("ion_loss_risk")),
        }
        return ScenarioResult({"envelope": envelopes, "dropout": dropouts}, metrics)


if __name__ == "__main__":
    from trapcal.config import load_default_config

    result = ResonatorScenario(load_default_config("resonator")).run()
    print(result.metrics)
