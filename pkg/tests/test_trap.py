import math

import numpy as np
import pytest

from trapcal.errors import DegenerateDirection, IonLost
from trapcal.trap import (
    IonSpecies,
    LaserBeam,
    RfDriveModel,
    StrayField,
    TrapSetting,
    axial_beam,
    displacement_change,
    equilibrium_displacement,
    field_phase_at,
    horizontal_beam,
    mathieu_q,
    secular_from_scale,
    sensitivity_direction,
    vertical_beam,
    wrap_phase,
)

TWO_PI = 2 * math.pi


@pytest.fixture
def ion():
    return IonSpecies.sr88()


@pytest.fixture
def drive():
    return RfDriveModel.calibrated(
        TrapSetting.from_hz("s=1", [1.5e6, 1.6e6, 1.0e6]), TWO_PI * 20e6
    )


def test_wrap_phase_range():
    phases = np.linspace(-20, 20, 401)
    wrapped = wrap_phase(phases)
    assert np.all(wrapped >= -math.pi)
    assert np.all(wrapped < math.pi)
    assert np.allclose(np.cos(wrapped), np.cos(phases))
    assert wrap_phase(math.pi) == pytest.approx(-math.pi)


def test_sr88_charge_to_mass(ion):
    assert ion.charge_to_mass == pytest.approx(1.0964e6, rel=1e-3)


def test_trap_setting_rejects_non_confining_axis():
    with pytest.raises(IonLost):
        TrapSetting("bad", (1.0, 0.0, 1.0))


def test_displacement_scales_with_field_over_frequency_squared(ion):
    setting = TrapSetting.from_hz("A", [1.5e6, 1.5e6, 1.0e6])
    r = equilibrium_displacement(ion, setting, StrayField((1.0, 0.0, 0.0)))
    expected = ion.charge_to_mass / (TWO_PI * 1.5e6) ** 2
    assert r[0] == pytest.approx(expected)
    assert r[1] == 0.0
    assert r[2] == 0.0

    doubled = equilibrium_displacement(ion, setting, StrayField((2.0, 0.0, 0.0)))
    assert doubled[0] == pytest.approx(2 * r[0])


def test_displacement_change_matches_difference(ion):
    a = TrapSetting.from_hz("A", [1.5e6, 1.6e6, 1.0e6])
    b = TrapSetting.from_hz("B", [0.6e6, 0.7e6, 1.0e6])
    field = StrayField((0.3, -0.2, 0.1))
    change = displacement_change(ion, a, b, field)
    expected = equilibrium_displacement(ion, b, field) - equilibrium_displacement(
        ion, a, field
    )
    assert np.allclose(change, expected)
    # Axial frequency is unchanged so the ion does not move along z
    assert change[2] == pytest.approx(0.0)


def test_field_phase_includes_offset():
    beam = LaserBeam("b", (1.0e6, 0.0, 0.0), phase_offset=0.5)
    assert field_phase_at(beam, (1e-7, 5.0, 5.0)) == pytest.approx(0.1 + 0.5)


def test_beams_point_where_named():
    h, v, z = horizontal_beam(), vertical_beam(), axial_beam()
    k = TWO_PI / 674e-9
    assert np.allclose(h.wavevector, k * np.array([1, -1, 0]) / math.sqrt(2))
    assert np.allclose(v.wavevector, k * np.array([1, 1, 0]) / math.sqrt(2))
    assert np.allclose(z.wavevector, [0, 0, k], atol=1e-6 * k)


def test_mathieu_q_signs():
    q = mathieu_q(np.array([1.0, 1.0, 1.0]), 10.0)
    assert q[0] > 0
    assert q[1] < 0
    assert q[2] > 0
    assert abs(q[0]) == pytest.approx(2 * math.sqrt(2) / 10)


def test_method_a_direction_follows_beam_and_frequency_change():
    a = TrapSetting.from_hz("A", [1.5e6, 1.5e6, 1.0e6])
    b = TrapSetting.from_hz("B", [0.6e6, 0.6e6, 1.0e6])
    d, unit = sensitivity_direction("A", [horizontal_beam()], a, b)
    # Equal radial frequencies: d is parallel to k
    assert np.allclose(unit, -horizontal_beam().wavevector / np.linalg.norm(
        horizontal_beam().wavevector
    ))
    assert np.linalg.norm(unit) == pytest.approx(1.0)
    assert np.linalg.norm(d) > 0


def test_direction_degenerate_when_settings_equal():
    a = TrapSetting.from_hz("A", [1.5e6, 1.5e6, 1.0e6])
    with pytest.raises(DegenerateDirection):
        sensitivity_direction("A", [horizontal_beam()], a, a)


def test_method_b_direction_uses_wavevector_difference():
    a = TrapSetting.from_hz("A", [1.5e6, 1.6e6, 1.0e6])
    b = TrapSetting.from_hz("B", [0.6e6, 0.7e6, 1.0e6])
    _, unit = sensitivity_direction("B", [horizontal_beam(), vertical_beam()], a, b)
    # k_h - k_v lies along -y
    assert unit[0] == pytest.approx(0.0, abs=1e-12)
    assert abs(unit[1]) == pytest.approx(1.0)


def test_method_b_needs_two_beams():
    a = TrapSetting.from_hz("A", [1.5e6, 1.6e6, 1.0e6])
    b = TrapSetting.from_hz("B", [0.6e6, 0.7e6, 1.0e6])
    with pytest.raises(ValueError):
        sensitivity_direction("B", [horizontal_beam()], a, b)


def test_method_c_plus_and_minus_combine_beams():
    a = TrapSetting.from_hz("A", [1.5e6, 1.5e6, 1.0e6])
    b = TrapSetting.from_hz("B", [0.6e6, 0.6e6, 1.0e6])
    beams = [horizontal_beam(), vertical_beam()]
    d_plus, _ = sensitivity_direction("C", beams, a, b, 2, 2, "plus")
    d_minus, _ = sensitivity_direction("C", beams, a, b, 2, 2, "minus")
    # k_h + k_v lies along x, k_h - k_v along -y
    assert d_plus[1] == pytest.approx(0.0, abs=1e-12 * np.linalg.norm(d_plus))
    assert d_minus[0] == pytest.approx(0.0, abs=1e-12 * np.linalg.norm(d_minus))


def test_calibrated_drive_reproduces_setting(drive):
    setting = secular_from_scale(drive, 1.0)
    assert np.allclose(setting.omega, TWO_PI * np.array([1.5e6, 1.6e6, 1.0e6]))


def test_critical_scale(drive):
    # x loses confinement first, at sqrt(1 / (2 * 2.75))
    assert drive.critical_scale(0) == pytest.approx(0.4264, abs=1e-4)
    assert drive.critical_scale(0) > drive.critical_scale(1)


def test_scale_below_critical_loses_ion(drive):
    with pytest.raises(IonLost):
        secular_from_scale(drive, 0.4)
    secular_from_scale(drive, 0.43)


def test_slope_ratio_of_two_stiffness_drops():
    """
    Dropping 1.5 MHz to 0.4 MHz moves the ion 2.49 times as far as dropping
    to 0.6 MHz
    """
    a = TrapSetting.from_hz("A", [1.5e6, 1.5e6, 1.0e6])
    deep = TrapSetting.from_hz("deep", [0.4e6, 0.4e6, 1.0e6])
    shallow = TrapSetting.from_hz("shallow", [0.6e6, 0.6e6, 1.0e6])
    d_deep, _ = sensitivity_direction("A", [horizontal_beam()], a, deep)
    d_shallow, _ = sensitivity_direction("A", [horizontal_beam()], a, shallow)
    ratio = np.linalg.norm(d_deep) / np.linalg.norm(d_shallow)
    assert ratio == pytest.approx(2.488, rel=1e-3)
