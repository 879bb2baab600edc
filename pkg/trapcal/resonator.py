"""
Complex envelope of the RF resonator when the drive is switched between two
sources, or ramped on one source.

The resonator is a single-pole low-pass filter on the drive envelope,
``tau db/dt = s(t) - b``, driven on resonance.
"""

from dataclasses import dataclass, replace
from enum import Enum
import logging
import math
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SETTLE_GRID = 4001


class ServoMode(Enum):
    SWITCHED = "switched"
    STABILIZED = "stabilized"
    RAMPED = "ramped"


@dataclass(frozen=True)
class ResonatorParams:
    """
    :param tau: Envelope time constant (s)
    :param resonance: Resonance angular frequency (rad/s), optional
    :param Q: Quality factor, optional. When given with ``resonance`` it must
        agree with ``tau = 2Q / resonance`` to within 20%.
    """

    tau: float
    resonance: Optional[float] = None
    Q: Optional[float] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.resonance is not None and self.Q is not None:
            implied = 2 * self.Q / self.resonance
            if abs(implied - self.tau) > 0.2 * self.tau:
                raise ValueError(
                    f"tau={self.tau:g} s disagrees with 2Q/resonance={implied:g} s"
                )

    @classmethod
    def from_q(cls, resonance: float, Q: float) -> "ResonatorParams":
        return cls(2 * Q / resonance, resonance, Q)


@dataclass(frozen=True)
class SourceSwitch:
    """
    :param A2: Amplitude of the second source relative to the first
    :param delta_phi: Phase of the second source relative to the first (rad)
    :param t_switch: Time the drive moves to source 2 (s)
    :param t_revert: Time the drive returns to source 1 (s)
    :param A1: Amplitude of the first source
    """

    A2: float
    delta_phi: float = 0.0
    t_switch: float = 0.0
    t_revert: float = math.inf
    A1: float = 1.0

    def __post_init__(self):
        if self.A1 < 0 or self.A2 < 0:
            raise ValueError("Source amplitudes must be non-negative")
        if not self.t_revert > self.t_switch:
            raise ValueError("t_revert must come after t_switch")


@dataclass(frozen=True)
class DropoutResult:
    minimum: float
    time: float
    ion_loss_risk: bool


def _source_levels(switch: SourceSwitch, mode: ServoMode, source_gain_error: float):
    gain = 1 + source_gain_error
    first = switch.A1 if mode is ServoMode.STABILIZED else switch.A1 * gain
    rotation = complex(math.cos(switch.delta_phi), math.sin(switch.delta_phi))
    second = switch.A2 * gain * rotation
    return complex(first), second


def _setpoint(switch: SourceSwitch, ramp_time: float, t: float) -> float:
    def ramp(start: float, end: float, elapsed: float) -> float:
        fraction = min(max(elapsed / ramp_time, 0.0), 1.0)
        return start + (end - start) * 0.5 * (1 - math.cos(math.pi * fraction))

    if t < switch.t_switch:
        return switch.A1
    if t < switch.t_revert:
        return ramp(switch.A1, switch.A2, t - switch.t_switch)
    held = ramp(switch.A1, switch.A2, switch.t_revert - switch.t_switch)
    return ramp(held, switch.A1, t - switch.t_revert)


def _ramped(params: ResonatorParams, switch: SourceSwitch, ramp_time: float, t):
    times = np.atleast_1d(np.asarray(t, dtype=float))
    end = float(times.max(initial=0.0))
    if end <= 0:
        return np.full(times.shape, complex(switch.A1))
    solution = solve_ivp(
        lambda time, b: (_setpoint(switch, ramp_time, time) - b) / params.tau,
        (0.0, end),
        [switch.A1],
        dense_output=True,
        max_step=min(ramp_time, params.tau) / 20,
        rtol=1e-9,
        atol=1e-12,
    )
    return solution.sol(times)[0].astype(complex)


def envelope(
    params: ResonatorParams,
    switch: SourceSwitch,
    t: ArrayLike,
    mode: ServoMode = ServoMode.SWITCHED,
    source_gain_error: float = 0.0,
    ramp_time: Optional[float] = None,
) -> Union[complex, np.ndarray]:
    """
    Resonator envelope ``b(t)`` relative to source 1's nominal amplitude

    Source 1 drives the resonator to steady state before ``t_switch``; from
    ``t_switch`` the envelope relaxes towards ``A2 e^{i delta_phi}``, and from
    ``t_revert`` back towards ``A1``.

    :param params: Resonator time constant
    :param switch: Source amplitudes, relative phase and switching times
    :param t: Time or array of times (s)
    :param mode: ``SWITCHED`` sources run open loop with ``source_gain_error``;
        ``STABILIZED`` holds source 1 at ``A1`` while source 2 stays open loop;
        ``RAMPED`` uses a single source whose setpoint follows a raised-cosine
        ramp between ``A1`` and ``A2`` (``delta_phi`` unused)
    :param source_gain_error: Fractional amplitude drift of the open-loop sources
    :param ramp_time: Ramp length in ``RAMPED`` mode, default ``tau``
    :return: Complex envelope, scalar for scalar ``t``
    """
    scalar = np.ndim(t) == 0
    if np.any(np.asarray(t) < 0):
        raise ValueError("Envelope times must be non-negative")

    if mode is ServoMode.RAMPED:
        b = _ramped(params, switch, ramp_time or params.tau, t)
        return complex(b[0]) if scalar else b

    first, second = _source_levels(switch, mode, source_gain_error)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    b = np.full(times.shape, first, dtype=complex)

    during = (times >= switch.t_switch) & (times < switch.t_revert)
    b[during] = second + (first - second) * np.exp(
        -(times[during] - switch.t_switch) / params.tau
    )
    if math.isfinite(switch.t_revert):
        at_revert = second + (first - second) * math.exp(
            -(switch.t_revert - switch.t_switch) / params.tau
        )
        after = times >= switch.t_revert
        b[after] = first + (at_revert - first) * np.exp(
            -(times[after] - switch.t_revert) / params.tau
        )

    return complex(b[0]) if scalar else b


def settle_time(
    params: ResonatorParams,
    switch: SourceSwitch,
    tolerance: float,
    mode: ServoMode = ServoMode.SWITCHED,
    source_gain_error: float = 0.0,
    ramp_time: Optional[float] = None,
) -> float:
    """
    Time after ``t_switch`` from which ``||b| - A2|`` stays within
    ``tolerance`` of the amplitude step ``|A1 - A2|`` (of ``A2`` when the
    amplitudes are equal)

    :param tolerance: Fraction in (0, 1)
    :return: Settling time (s), measured from ``t_switch``
    """
    if not 0 < tolerance < 1:
        raise ValueError(f"tolerance must lie in (0, 1), got {tolerance}")

    held = replace(switch, t_revert=math.inf)
    first, second = _source_levels(held, mode, source_gain_error)
    target = abs(second) if mode is not ServoMode.RAMPED else held.A2
    scale = abs(abs(first) - target) or target
    bound = tolerance * scale

    if mode is ServoMode.RAMPED:
        horizon = (ramp_time or params.tau) + params.tau * math.log(
            max(abs(first - target), bound) / bound
        )
    else:
        horizon = params.tau * math.log(max(abs(first - second), bound) / bound)
    horizon = 1.01 * horizon + 1e-12

    def excess(x):
        b = envelope(
            params, held, held.t_switch + x, mode, source_gain_error, ramp_time
        )
        return np.abs(np.abs(b) - target) - bound

    grid = np.linspace(0.0, horizon, SETTLE_GRID)
    outside = np.nonzero(excess(grid) > 0)[0]
    if not len(outside):
        return 0.0
    last = outside[-1]
    if last == len(grid) - 1:
        raise ValueError("Envelope did not settle within the search horizon")
    settled = brentq(lambda x: float(excess(x)), grid[last], grid[last + 1])

    if held.t_switch + settled > switch.t_revert:
        logger.warning(
            "Envelope settles %.3g s after the switch, past the revert time", settled
        )
    return float(settled)


def _segment_minimum(start: complex, end: complex, u_low: float):
    """
    Closest approach to 0 of ``end + (start - end) u`` for ``u`` in [u_low, 1]
    """
    step = start - end
    if step == 0:
        return abs(end), 1.0
    u = -(step.conjugate() * end).real / abs(step) ** 2
    u = min(max(u, u_low), 1.0)
    return abs(end + step * u), u


def dropout_depth(
    params: ResonatorParams,
    switch: SourceSwitch,
    floor: float = 0.1,
    mode: ServoMode = ServoMode.SWITCHED,
    source_gain_error: float = 0.0,
    ramp_time: Optional[float] = None,
) -> DropoutResult:
    """
    Deepest dip of ``|b|`` over the transient

    :param floor: Envelope below which the trap is assumed unable to hold the ion
    :return: Minimum ``|b|``, its time, and whether it falls below ``floor``
    """
    if mode is ServoMode.RAMPED:
        end = switch.t_revert if math.isfinite(switch.t_revert) else switch.t_switch
        end += 10 * params.tau + 2 * (ramp_time or params.tau)
        times = np.linspace(0.0, end, SETTLE_GRID)
        magnitudes = np.abs(envelope(params, switch, times, mode, ramp_time=ramp_time))
        index = int(np.argmin(magnitudes))
        minimum, time = float(magnitudes[index]), float(times[index])
    else:
        first, second = _source_levels(switch, mode, source_gain_error)
        span = switch.t_revert - switch.t_switch
        u_low = math.exp(-span / params.tau) if math.isfinite(span) else 0.0
        minimum, u = _segment_minimum(first, second, u_low)
        time = switch.t_switch - params.tau * math.log(u) if u > 0 else math.inf
        if math.isfinite(switch.t_revert):
            at_revert = second + (first - second) * u_low
            after, v = _segment_minimum(at_revert, first, 0.0)
            if after < minimum:
                minimum = after
                time = switch.t_revert - params.tau * math.log(v) if v > 0 else math.inf
        if abs(first) < minimum:
            minimum, time = abs(first), 0.0

    risk = minimum < floor
    if risk:
        logger.warning(
            "Resonator envelope drops to %.3g, below the trapping floor %.3g",
            minimum,
            floor,
        )
    return DropoutResult(minimum, time, risk)
