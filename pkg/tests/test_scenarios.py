from dataclasses import replace
import math

import pytest

from trapcal.compensation import DriftModel
from trapcal.config import SCENARIO_NAMES, load_default_config
from trapcal.errors import ConfigInvalid, ScenarioUnknown
from trapcal.scenarios import SCENARIOS, get_scenario
from trapcal.scenarios.fringe import count_zero_crossings
from trapcal.trap import wrap_phase


def _run(name, **params):
    config = load_default_config(name)
    config = replace(config, params={**config.params, **params})
    return get_scenario(name)(config).run()


def test_registry_matches_config_names():
    assert tuple(SCENARIOS) == SCENARIO_NAMES
    with pytest.raises(ScenarioUnknown):
        get_scenario("nope")


def test_count_zero_crossings():
    assert count_zero_crossings([0.2, 0.8, 0.9, 0.1]) == 2
    # Points sitting on the level do not count twice
    assert count_zero_crossings([0.2, 0.5, 0.8, 0.5]) == 2


def test_fringe_frequency_grows_with_m():
    result = _run("fringe", points=201)
    ratios = result.metrics["frequency_ratio_to_M1"]
    assert ratios == {str(M): float(M) for M in (1, 2, 4, 8, 16)}
    assert len(result.tables["fringe"].rows) == 5 * 201


def test_method_b_difference_ignores_path_drift():
    metrics = _run("method-b-drift", n_steps=20).metrics
    assert metrics["difference_spread_rad"] < 1e-9
    assert metrics["difference_mean_rad"] == pytest.approx(
        metrics["difference_expected_rad"], abs=1e-9
    )
    assert metrics["phi_pd_A_spread_rad"] > 0.1


def test_closed_loop_reduces_field():
    result = _run("closed-loop", duration_s=200.0)
    metrics = result.metrics
    assert len(result.tables["timeseries"].rows) == 20
    assert len(metrics["gradient_matrix_rad_per_v"]) == 2
    assert metrics["final_2d_field_v_per_m"] < math.hypot(0.5, 0.3) / 3
    assert 0 < metrics["rf_reduced_fraction"] < 1
    assert metrics["rf_mean_power"] < 1
    assert metrics["rf_balanced_mean_power"] == pytest.approx(1.0)
    assert "Erf_Vm" in result.tables["timeseries"].columns


def test_closed_loop_white_noise_deviation_falls_as_root_tau():
    metrics = _run("closed-loop", fit_max_tau_s=640.0).metrics
    assert metrics["fitted_exponent"] == pytest.approx(-0.5, abs=0.1)
    assert metrics["final_2d_field_v_per_m"] < 0.2


def test_closed_loop_drift_turns_deviation_up():
    config = load_default_config("closed-loop")
    config = replace(config, drift=DriftModel(field_rate=0.002))
    result = get_scenario("closed-loop")(config).run()
    taus = result.tables["deviation"].column("tau_s")
    deviations = result.tables["deviation"].column("deviation_v_per_m")
    best = deviations.index(min(deviations))
    assert result.metrics["min_deviation_tau_s"] == taus[best]
    assert 0 < best < len(taus) - 1
    assert max(deviations[best + 1 :]) > 1.5 * deviations[best]


def test_robustness_settings_cancel_even_area_errors():
    result = _run(
        "robustness",
        even_area_errors=[0.0, 0.05, 0.1],
        odd_area_errors=[0.0, 0.1],
        detuning_steps=[0.0, 0.1, 0.3],
        bias_points=8,
    )
    metrics = result.metrics
    assert metrics["M"] == 16
    assert metrics["ideal_shift_rad"] < 1e-9
    assert metrics["max_area_shift_rad"]["I"] < 0.05
    assert metrics["max_area_shift_rad"]["II"] < 0.05
    # Only rows with both even and odd errors bias the single settings
    assert metrics["average_compared"] == 2
    assert metrics["average_beats_single"] is True
    assert metrics["detuning_shift_ratio"] < 0.2


def test_robustness_average_must_beat_both_settings():
    shifts = {
        row[2]: row[4]
        for row in _run(
            "robustness",
            even_area_errors=[0.1],
            odd_area_errors=[0.1],
            detuning_steps=[0.0],
            bias_points=8,
        ).tables["area_error"].rows
    }
    assert abs(shifts["averagedI_II"]) < abs(shifts["I"])
    assert abs(shifts["averagedI_II"]) < abs(shifts["II"])


def _distance(phi, targets):
    return min(abs(float(wrap_phase(phi - target))) for target in targets)


def test_robustness_bias_extrema_are_complementary():
    result = _run("robustness", even_area_errors=[0.0], detuning_steps=[0.0])
    metrics = result.metrics
    bias = result.tables["bias"]
    assert len(bias.rows) == 2 * 128
    curve = {(tag, round(phi, 9)): shift for tag, phi, shift in bias.rows}
    quarter = round(math.pi / 2, 9)

    # Settings I is exact at phi_PD = 0 and worst around +-pi/2
    assert abs(curve[("I", 0.0)]) < 1e-9
    peaks = metrics["bias_peak_phi_pd_rad"]
    assert _distance(peaks["I"], [math.pi / 2, -math.pi / 2]) <= 0.25
    near_zero, near_quarter = (
        metrics["bias_near_zero_rad"],
        metrics["bias_near_quarter_turn_rad"],
    )
    assert near_quarter["I"] > 3 * near_zero["I"]

    # Settings III is the other way round
    assert abs(curve[("III", quarter)]) < 1e-9
    assert abs(curve[("III", -quarter)]) < 1e-9
    assert _distance(peaks["III"], [0.0, math.pi]) <= 0.25
    assert near_zero["III"] > 3 * near_quarter["III"]


def test_rpe_scaling_error_falls_with_area():
    result = _run("rpe-scaling", per_pass=20, trials=200)
    table = result.tables["scaling"]
    assert table.column("j_max") == [1, 2, 3, 4, 5]
    assert table.column("total_area_rad")[-1] == pytest.approx(620 * math.pi)
    assert result.metrics["fitted_exponent"] < 0


def test_rpe_scaling_beats_standard_quantum_limit():
    metrics = _run("rpe-scaling").metrics
    assert metrics["error_over_sql"][-1] < 1
    assert metrics["fitted_exponent"] <= -0.6
    assert metrics["t2_ratio_at_longest"] > 1.2


def test_rpe_scaling_needs_powers_of_two():
    config = load_default_config("rpe-scaling")
    schedule = replace(config.schedule, M=(1, 3))
    with pytest.raises(ConfigInvalid, match="3 is not a power of two"):
        get_scenario("rpe-scaling")(replace(config, schedule=schedule)).run()


def test_geometry_directions_collapse_near_stability_limit():
    result = _run("geometry-2d", hybrid_trials=2)
    metrics = result.metrics
    assert metrics["critical_scale"] == pytest.approx(0.4264, abs=1e-4)
    assert metrics["degenerate_angle_deg"] == pytest.approx([90.0] * 7)
    assert metrics["collapsed_angle_deg"] == pytest.approx(14.4, abs=0.5)
    assert metrics["hybrid_converged"] == 2


def test_axial_loop_needs_rf_axial_confinement():
    metrics = _run("axial", duration_s=200.0).metrics
    assert metrics["zero_slope"]
    assert abs(metrics["gradient_rad_per_v"]) > 0.05
    assert metrics["final_axial_field_v_per_m"] < 1.0


def test_axial_rejects_static_only_axis():
    config = load_default_config("axial")
    drive = replace(config.drive, rf_axial=0.0)
    with pytest.raises(ConfigInvalid, match="rf_axial_hz"):
        get_scenario("axial")(replace(config, drive=drive)).run()


def test_stat_uncertainty_follows_law():
    result = _run("stat-uncertainty", N_values=[20, 40, 80], trials=10000, curve_N=[])
    ratios = result.metrics["ratio_to_law"]
    for N in (20, 40, 80):
        assert ratios[f"arctan2/N={N}"] == pytest.approx(1.0, abs=0.1)
    laws = result.tables["summary"].column("law_rad")
    assert laws == pytest.approx([1.24 / math.sqrt(N) for N in (20, 40, 80)])


def test_stat_uncertainty_zero_phase_crossover():
    """
    phi_T = 0 is the most precise point for few measurements and the least
    precise one for many
    """
    result = _run(
        "stat-uncertainty",
        N_values=[],
        trials=40000,
        curve_N=[6, 40],
        curve_phases=[-0.4, 0.0, 0.4],
    )
    metrics = result.metrics
    assert metrics["extremum_at_zero"] == {"6": "minimum", "40": "maximum"}
    assert metrics["most_precise_phi_T_rad"]["6"] == 0.0
    curve = result.tables["curve"]
    at_zero = [
        error
        for N, phi, error in zip(
            curve.column("N"), curve.column("phi_T_rad"), curve.column("rms_error_rad")
        )
        if phi == 0.0
    ]
    assert at_zero == pytest.approx([0.482, 0.214], abs=0.01)


def test_resonator_dropout_and_settling():
    metrics = _run("resonator").metrics
    assert metrics["tau_us"] == pytest.approx(17.0)
    assert metrics["zero_crossing_over_tau"] == pytest.approx(0.887, abs=1e-3)
    assert metrics["settle_time_us"] == pytest.approx(50.93, abs=1.0)
    assert metrics["ion_loss_risk"]


def test_resonator_rejects_unknown_mode():
    with pytest.raises(ConfigInvalid, match="params.mode"):
        _run("resonator", mode="bogus")
