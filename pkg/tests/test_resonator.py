import math

import numpy as np
import pytest

from trapcal.resonator import (
    ResonatorParams,
    ServoMode,
    SourceSwitch,
    dropout_depth,
    envelope,
    settle_time,
)

TAU = 17e-6


@pytest.fixture
def params():
    return ResonatorParams(TAU)


def test_params_check_q_against_tau():
    resonance = 2 * math.pi * 20e6
    assert ResonatorParams.from_q(resonance, 1000).tau == pytest.approx(
        2000 / resonance
    )
    with pytest.raises(ValueError):
        ResonatorParams(TAU, resonance, 10.0)
    with pytest.raises(ValueError):
        ResonatorParams(0.0)


def test_switch_times_must_be_ordered():
    with pytest.raises(ValueError):
        SourceSwitch(0.7, t_switch=1e-6, t_revert=1e-6)


def test_envelope_relaxes_to_second_source(params):
    switch = SourceSwitch(0.7, math.pi / 2, t_switch=10e-6)
    assert envelope(params, switch, 5e-6) == 1.0
    assert envelope(params, switch, 10e-6 + TAU) == pytest.approx(
        0.7j + (1 - 0.7j) * math.exp(-1)
    )
    assert abs(envelope(params, switch, 10e-6 + 20 * TAU)) == pytest.approx(0.7, rel=1e-6)


def test_envelope_returns_after_revert(params):
    switch = SourceSwitch(0.7, math.pi, t_switch=0.0, t_revert=TAU)
    late = envelope(params, switch, np.array([TAU + 30 * TAU]))
    assert late[0] == pytest.approx(1.0, abs=1e-9)


def test_opposite_phase_switch_passes_through_zero(params):
    """
    Switching to a source of amplitude 0.7 in antiphase drives the envelope
    through zero at tau * ln(1.7 / 0.7)
    """
    switch = SourceSwitch(0.7, math.pi)
    dropout = dropout_depth(params, switch)
    assert dropout.minimum == pytest.approx(0.0, abs=1e-12)
    assert dropout.time / TAU == pytest.approx(math.log(1.7 / 0.7))
    assert dropout.time / TAU == pytest.approx(0.887, abs=1e-3)
    assert dropout.ion_loss_risk


def test_in_phase_switch_is_safe(params):
    dropout = dropout_depth(params, SourceSwitch(0.7, 0.0))
    assert dropout.minimum == pytest.approx(0.7)
    assert not dropout.ion_loss_risk


def test_settle_time(params):
    """
    In phase, |b| = 0.7 + 0.3 exp(-t / tau) comes within 5% of the step after
    tau * ln(20)
    """
    settled = settle_time(params, SourceSwitch(0.7, 0.0), 0.05)
    assert settled == pytest.approx(TAU * math.log(20), rel=1e-6)
    assert settled == pytest.approx(50.93e-6, abs=1e-6)


def test_settle_time_needs_fractional_tolerance(params):
    with pytest.raises(ValueError):
        settle_time(params, SourceSwitch(0.7), 1.5)


def test_stabilized_mode_ignores_gain_error_on_first_source(params):
    switch = SourceSwitch(0.7, 0.0, t_switch=10e-6)
    switched = envelope(params, switch, 0.0, ServoMode.SWITCHED, 0.1)
    stabilized = envelope(params, switch, 0.0, ServoMode.STABILIZED, 0.1)
    assert switched == pytest.approx(1.1)
    assert stabilized == pytest.approx(1.0)


def test_ramped_mode_avoids_dropout(params):
    switch = SourceSwitch(0.7, math.pi)
    dropout = dropout_depth(params, switch, mode=ServoMode.RAMPED)
    assert dropout.minimum == pytest.approx(0.7, abs=1e-3)
    assert not dropout.ion_loss_risk

    late = envelope(params, switch, 15 * TAU, ServoMode.RAMPED)
    assert late == pytest.approx(0.7, abs=1e-4)


def test_negative_times_rejected(params):
    with pytest.raises(ValueError):
        envelope(params, SourceSwitch(0.7), -1.0)
