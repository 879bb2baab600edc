import math

import numpy as np
import pytest

from trapcal.errors import BadSchedule, OddM, Undefined, ZeroDenominator
from trapcal.estimators import (
    ArctanMonteCarlo,
    ControlPhaseSettings,
    PhaseEstimate,
    RpeSchedule,
    average_estimates,
    control_phases,
    estimate_arcsin,
    estimate_arctan2,
    estimate_arctan2_offset,
    estimate_method_b_difference,
    estimate_settings,
    heisenberg_schedule,
    rms,
    rpe_combine,
    rpe_estimate,
    rpe_schedule,
    sql_bound,
)
from trapcal.pulses import ideal_probability, total_phase
from trapcal.trap import wrap_phase


def _p(phi_T, theta_T):
    return float(ideal_probability(phi_T, theta_T))


@pytest.mark.parametrize("phi_T", [-1.2, -0.3, 0.0, 0.8, 1.5])
def test_arcsin_recovers_phase(phi_T):
    estimate = estimate_arcsin(_p(phi_T, -math.pi / 2), _p(phi_T, math.pi / 2))
    assert estimate.value == pytest.approx(phi_T, abs=1e-12)
    assert estimate.range_halfwidth == pytest.approx(math.pi / 2)
    assert not estimate.clamped


def test_arcsin_divides_out_contrast():
    contrast = 0.6
    p_minus = float(ideal_probability(0.4, -math.pi / 2, contrast))
    p_plus = float(ideal_probability(0.4, math.pi / 2, contrast))
    assert estimate_arcsin(p_minus, p_plus, contrast).value == pytest.approx(0.4)


def test_arcsin_clamps_and_flags():
    estimate = estimate_arcsin(1.0, 0.0, contrast=0.5)
    assert estimate.clamped
    assert estimate.value == pytest.approx(math.pi / 2)


def test_arcsin_zero_denominator():
    with pytest.raises(ZeroDenominator):
        estimate_arcsin(0.0, 0.0)


@pytest.mark.parametrize("phi_T", [-3.0, -1.2, 0.0, 2.0, 3.1])
def test_arctan2_estimators_recover_phase(phi_T):
    plain = estimate_arctan2(_p(phi_T, -math.pi / 2), _p(phi_T, 0.0))
    offset = estimate_arctan2_offset(
        _p(phi_T, math.pi / 4), _p(phi_T, 3 * math.pi / 4)
    )
    assert plain.value == pytest.approx(phi_T, abs=1e-12)
    assert offset.value == pytest.approx(phi_T, abs=1e-12)


def test_arctan2_undefined_at_fringe_centre():
    with pytest.raises(Undefined):
        estimate_arctan2(0.5, 0.5)


def test_estimate_outside_range_rejected():
    with pytest.raises(ValueError):
        PhaseEstimate(2.0, math.pi / 2, 2, "arcsin")
    with pytest.raises(ValueError):
        PhaseEstimate(0.0, math.pi, 2, "bogus")


@pytest.mark.parametrize("M", [2, 4, 6])
@pytest.mark.parametrize("tag", ["I", "II", "III"])
def test_settings_families_recover_phase(M, tag):
    """
    Ideal pulses give back phi_T from the theta_1 = pi/2 and pi runs
    """
    phi_T = 0.9
    phi = [phi_T] + [0.0] * M
    settings = ControlPhaseSettings(tag, M)
    p_half = _p(*total_phase(phi, control_phases(settings, math.pi / 2), M))
    p_pi = _p(*total_phase(phi, control_phases(settings, math.pi), M))

    estimate = estimate_settings(p_half, p_pi, M, tag)
    assert estimate.value == pytest.approx(phi_T, abs=1e-12)
    assert estimate.estimator_tag == f"settings{tag}"


def test_control_phases_layout():
    thetas = control_phases(ControlPhaseSettings("III", 4), math.pi)
    assert thetas == pytest.approx(
        [math.pi, math.pi / 2, -math.pi / 2, math.pi / 2, math.pi]
    )
    plain = control_phases(ControlPhaseSettings("plain", 3), 0.5)
    assert plain == [0.5, 0.0, 0.0, 0.0]


def test_settings_need_even_m():
    with pytest.raises(OddM):
        ControlPhaseSettings("I", 3)
    with pytest.raises(OddM):
        estimate_settings(0.5, 0.2, 3, "II")


def test_average_estimates():
    first = PhaseEstimate(0.1, math.pi, 2, "settingsI")
    second = PhaseEstimate(0.3, math.pi, 2, "settingsII")
    average = average_estimates([first, second])
    assert average.value == pytest.approx(0.2)
    assert average.samples_used == 4
    assert average.estimator_tag == "averagedI_II"


def test_average_across_the_branch_cut():
    first = PhaseEstimate(math.pi - 0.1, math.pi, 2, "settingsI")
    second = PhaseEstimate(-math.pi + 0.1, math.pi, 2, "settingsII")
    assert abs(average_estimates([first, second]).value) == pytest.approx(math.pi)


def test_method_b_difference_wraps_to_per_length_range():
    M = 4
    at_a = PhaseEstimate(0.7, math.pi, 2, "arctan2")
    at_b = PhaseEstimate(-0.2, math.pi, 2, "arctan2")
    difference = estimate_method_b_difference(at_a, at_b, M)
    assert difference.range_halfwidth == pytest.approx(math.pi / M)
    assert difference.value == pytest.approx(0.9 - 2 * math.pi / M)


def test_schedules():
    schedule = rpe_schedule(5, 100)
    assert schedule.lengths == [1, 2, 4, 8, 16]
    assert schedule.total_area() == pytest.approx(3100 * math.pi)
    assert heisenberg_schedule(3, 10).counts == (14, 12, 10)
    assert heisenberg_schedule(2, 10, growth=1).counts == (12, 10)


def test_bad_schedules():
    with pytest.raises(BadSchedule):
        RpeSchedule(())
    with pytest.raises(BadSchedule):
        RpeSchedule((10, 7))


def test_sql_bound():
    assert sql_bound(3100 * math.pi) == pytest.approx(0.018, abs=5e-4)
    with pytest.raises(ValueError):
        sql_bound(0.0)


@pytest.mark.parametrize("phi", [-2.9, -1.0, 0.3, 2.5])
def test_rpe_noiseless_recovers_phase(phi):
    estimate, passes = rpe_estimate(rpe_schedule(4, 10), phi)
    assert estimate == pytest.approx(phi, abs=1e-9)
    assert [p.range_halfwidth for p in passes] == pytest.approx(
        [math.pi, math.pi / 2, math.pi / 4, math.pi / 8]
    )


def test_rpe_combine_picks_nearest_branch():
    passes = [
        PhaseEstimate(2.5, math.pi, 2, "rpe"),
        PhaseEstimate(2.5 - math.pi, math.pi / 2, 2, "rpe"),
    ]
    assert rpe_combine(passes) == pytest.approx(2.5)


def test_rpe_combine_checks_pass_ranges():
    passes = [
        PhaseEstimate(0.0, math.pi, 2, "rpe"),
        PhaseEstimate(0.0, math.pi, 2, "rpe"),
    ]
    with pytest.raises(BadSchedule):
        rpe_combine(passes)


def test_arctan2_statistical_error_follows_law():
    """
    Over uniformly drawn phases the RMS error approaches 1.24 / sqrt(N)
    """
    N = 80
    errors = ArctanMonteCarlo(N, random_seed=3)(n_trials=4000)
    assert rms(errors) == pytest.approx(1.24 / math.sqrt(N), rel=0.1)


def test_arctan_monte_carlo_needs_even_n():
    with pytest.raises(ValueError):
        ArctanMonteCarlo(7)


def test_arctan_monte_carlo_repeated_calls_keep_estimator():
    """
    Later batches continue the trial indices and still use the -pi/2, 0 pair,
    whose RMS error at phi_T = 0 for N = 40 is 0.214
    """
    simulation = ArctanMonteCarlo(40, phi_T=0.0, random_seed=5)
    first = simulation(n_trials=20000)
    second = simulation(n_trials=20000)
    assert simulation.next_index == 40000
    assert not simulation.use_offset
    assert first != second
    assert rms(first) == pytest.approx(0.214, abs=0.01)
    assert rms(second) == pytest.approx(0.214, abs=0.01)


def test_arctan_monte_carlo_offset_variant_is_opt_in():
    simulation = ArctanMonteCarlo(40, phi_T=0.0, offset=True, random_seed=5)
    simulation(n_trials=10)
    assert simulation.use_offset
    assert simulation.next_index == 10


def test_rpe_noiseless_random_phases():
    rng = np.random.default_rng(2024)
    schedule = rpe_schedule(5, 8)
    for phi in rng.uniform(-math.pi, math.pi, size=10000):
        estimate, _ = rpe_estimate(schedule, float(phi))
        assert abs(float(wrap_phase(estimate - phi))) < 1e-9


def _perturbed(passes, j, delta):
    half = passes[j - 1].range_halfwidth
    value = (passes[j - 1].value + delta + half) % (2 * half) - half
    shifted = PhaseEstimate(value, half, passes[j - 1].samples_used, "rpe")
    return passes[: j - 1] + [shifted] + passes[j:]


def test_rpe_bounded_pass_error_keeps_branch():
    """
    A pass j estimate off by less than pi / 2^j leaves the final estimate exact
    """
    rng = np.random.default_rng(7)
    schedule = rpe_schedule(5, 8)
    for _ in range(2000):
        phi = float(rng.uniform(-math.pi, math.pi))
        _, passes = rpe_estimate(schedule, phi)
        j = int(rng.integers(1, schedule.j_max))
        delta = float(rng.uniform(-0.99, 0.99)) * math.pi / 2**j
        combined = rpe_combine(_perturbed(passes, j, delta))
        assert abs(float(wrap_phase(combined - phi))) < 1e-9


def test_rpe_large_pass_error_corrupts_branch():
    _, passes = rpe_estimate(rpe_schedule(5, 8), 0.0)
    combined = rpe_combine(_perturbed(passes, 1, 1.1 * math.pi / 2))
    assert abs(float(wrap_phase(combined))) == pytest.approx(math.pi)
