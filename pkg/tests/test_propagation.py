"""Array gain and link-budget tests.

The closed-form values in here were worked out by hand for tiny arrays
(2x2 at half-wavelength spacing) and for the one-device power chain.
"""

import math

import numpy as np
import pytest

from metasense.circuit import DeviceDesign, MaterialModel, SrrDesign, calibrate_coupling
from metasense.errors import ConfigError
from metasense.propagation import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    LinkParams,
    angles,
    array_gain,
    array_gain_many,
    half_wavelength,
    incident_power,
    received_power_single,
    total_received_power,
)
from metasense.scene import EnvironmentField, PlacementSet, build_scene

BROADSIDE = (0.0, 0.0)
HORIZON_X = (math.pi / 2, 0.0)


def test_half_wavelength():
    assert half_wavelength(4e9) == pytest.approx(SPEED_OF_LIGHT / 4e9 / 2)


def test_angles_basic_directions():
    th, ph = angles((0, 0, 0), (0, 0, 1))
    assert th == pytest.approx(0.0)
    th, ph = angles((0, 0, 0), (1, 0, 0))
    assert (th, ph) == pytest.approx((math.pi / 2, 0.0))
    th, ph = angles((0, 0, 0), (0, 1, 0))
    assert (th, ph) == pytest.approx((math.pi / 2, math.pi / 2))
    with pytest.raises(ConfigError):
        angles((1, 2, 3), (1, 2, 3))


def test_element_lattice_centered():
    arr = ArrayConfig(n_side=3, element_spacing=0.1)
    pos = arr.element_positions()
    assert pos.shape == (9, 2)
    np.testing.assert_allclose(pos.mean(axis=0), [0.0, 0.0], atol=1e-15)
    assert arr.n_elements == 9


def test_peak_gain_is_elements_times_element_gain():
    # coherent sum: every element in phase at look == steer
    for n_side in (1, 2, 4):
        arr = ArrayConfig(n_side=n_side, element_gain=1.5)
        for steer in (BROADSIDE, HORIZON_X, (0.7, -1.1)):
            g = array_gain(arr, steer, steer, 3.9e9)
            assert g == pytest.approx(n_side ** 2 * 1.5, rel=1e-12)


def test_two_by_two_nulls_and_sidelobes():
    """2x2 at half-wavelength(4 GHz) spacing, steered broadside:
    gain toward the horizon is 4*cos^2(k*d/2), an exact null at 4 GHz
    and exactly 2.0 at 2 GHz."""
    arr = ArrayConfig(n_side=2)
    assert array_gain(arr, BROADSIDE, HORIZON_X, 4e9) == pytest.approx(0.0, abs=1e-24)
    assert array_gain(arr, BROADSIDE, HORIZON_X, 2e9) == pytest.approx(2.0, rel=1e-12)


def test_gain_reciprocity_in_look_steer_swap():
    # |sum exp(j k r.(u_look - u_steer))|^2 is symmetric under swap
    arr = ArrayConfig(n_side=4)
    a, b = (0.4, 0.3), (1.1, -2.0)
    assert array_gain(arr, a, b, 4.2e9) == pytest.approx(array_gain(arr, b, a, 4.2e9), rel=1e-12)


def test_array_gain_vector_frequency():
    arr = ArrayConfig(n_side=3)
    f = np.array([3.5e9, 4.0e9, 4.5e9])
    g = array_gain(arr, BROADSIDE, (0.3, 0.5), f)
    assert g.shape == (3,)
    for i in range(3):
        assert g[i] == pytest.approx(array_gain(arr, BROADSIDE, (0.3, 0.5), f[i]))


def test_array_gain_many_matches_scalar_loop():
    arr = ArrayConfig(n_side=4)
    steer = (0.6, 0.2)
    looks = np.array([[0.6, 0.2], [1.0, -0.4], [0.1, 2.0], [1.5, 3.0]])
    got = array_gain_many(arr, steer, looks, 4.1e9)
    want = [array_gain(arr, steer, tuple(lk), 4.1e9) for lk in looks]
    np.testing.assert_allclose(got, want, rtol=1e-12)
    # vector frequency: (n_f, n_looks)
    f = np.array([3.6e9, 4.4e9])
    got2 = array_gain_many(arr, steer, looks, f)
    assert got2.shape == (2, 4)
    np.testing.assert_allclose(got2[1], [array_gain(arr, steer, tuple(lk), 4.4e9) for lk in looks],
                               rtol=1e-12)


def test_invalid_array_and_frequency():
    with pytest.raises(ConfigError):
        ArrayConfig(n_side=0)
    with pytest.raises(ConfigError):
        array_gain(ArrayConfig(), BROADSIDE, HORIZON_X, -1.0)


# ------------------------------------------------------------- power chain

def test_incident_power_closed_form():
    # P_T=2, sigma=0.01, G=5, r=3 -> 2*0.01*5/(4*pi*9)
    assert incident_power(2.0, 0.01, 3.0, 5.0) == pytest.approx(0.0008841941282883075, rel=1e-12)
    with pytest.raises(ConfigError):
        incident_power(1.0, 0.01, 0.0, 1.0)


def test_received_power_closed_form():
    p_inc = incident_power(2.0, 0.01, 3.0, 5.0)
    got = received_power_single(p_inc, 0.7, 2.0, 3.0, 4e9)
    assert got == pytest.approx(3.302468020155076e-08, rel=1e-12)


def test_chain_equals_combined_coefficient():
    # P_T*sigma*G_t*S*G_r*lambda^2 / (32 pi^3 r_t^2 r_r^2)
    p_t, sigma, g_t, s, g_r, r_t, r_r, f = 1.3, 0.02, 4.0, 0.55, 2.5, 2.2, 1.7, 3.8e9
    lam = SPEED_OF_LIGHT / f
    combined = p_t * sigma * g_t * s * g_r * lam ** 2 / (32 * math.pi ** 3 * r_t ** 2 * r_r ** 2)
    chained = received_power_single(incident_power(p_t, sigma, r_t, g_t), s, r_r, g_r, f)
    assert chained == pytest.approx(combined, rel=1e-12)


# ------------------------------------------------------- four-part budget

def _setup(n_devices):
    scene = build_scene((2.0, 2.0, 2.0), 0.5, (0.75, 1.0, 1.0), (1.25, 1.0, 1.0))
    pos = tuple(tuple(scene.candidates[i]) for i in range(0, 4 * n_devices, 4))
    placement = PlacementSet(pos)
    band = (3.5e9, 4.5e9)
    srr_t = calibrate_coupling(SrrDesign(45.0, 50e-9, 4.0e-14, 6e-4, 1e-5, 3.0, 0.0,
                                         MaterialModel("temperature", 2000.0, 3950.0, 298.15, 0.1)), band)
    srr_h = calibrate_coupling(SrrDesign(55.0, 50e-9, 3.5e-14, 7.8e-4, 1e-5, 3.0, 0.0,
                                         MaterialModel("humidity", 2000.0, 1.2, 0.5, 0.002)), band)
    device = DeviceDesign(srrs=(srr_t, srr_h), area=0.01)
    field = EnvironmentField(np.column_stack([np.full(64, 298.15), np.full(64, 0.5)]))
    return scene, placement, device, field


def test_single_device_budget_equals_chain():
    scene, placement, device, field = _setup(1)
    f = np.linspace(3.5e9, 4.5e9, 11)
    params = LinkParams(p_t_w=1.0, eta=0.0, r_env=0.5,
                        tx_array=ArrayConfig(), rx_array=ArrayConfig())
    terms = total_received_power(scene, placement, [device], field, 0, f, params)
    pos = np.asarray(placement.positions[0])
    r_t = float(np.linalg.norm(pos - scene.tx_pos))
    r_r = float(np.linalg.norm(pos - scene.rx_pos))
    g_t = array_gain(params.tx_array, angles(scene.tx_pos, pos), angles(scene.tx_pos, pos), f)
    g_r = array_gain(params.rx_array, angles(scene.rx_pos, pos), angles(scene.rx_pos, pos), f)
    from metasense.circuit import device_reflection
    s = device_reflection(device, f, [298.15, 0.5])
    want = received_power_single(incident_power(1.0, device.area, r_t, g_t), s, r_r, g_r, f)
    np.testing.assert_allclose(terms.target, want, rtol=1e-12)
    np.testing.assert_allclose(terms.interference, 0.0)
    np.testing.assert_allclose(terms.environment, 0.0)
    np.testing.assert_allclose(terms.total_db, 10 * np.log10(want), rtol=1e-12)


def test_budget_interference_sums_other_devices():
    scene, placement, device, field = _setup(3)
    f = 4.0e9
    params = LinkParams(p_t_w=1.0, eta=0.0, tx_array=ArrayConfig(), rx_array=ArrayConfig())
    devices = [device] * 3
    terms = total_received_power(scene, placement, devices, field, 1, f, params)
    assert terms.interference > 0
    # target term must not depend on the other devices being present
    solo = total_received_power(scene, PlacementSet((placement.positions[1],)),
                                [device], field, 0, f, params)
    np.testing.assert_allclose(terms.target, solo.target, rtol=1e-12)
    total = terms.target + terms.interference
    np.testing.assert_allclose(terms.total_db, 10 * np.log10(total), rtol=1e-12)


def test_budget_environment_term():
    scene, placement, device, field = _setup(1)
    params = LinkParams(p_t_w=2.0, eta=0.9, r_env=0.5,
                        tx_array=ArrayConfig(), rx_array=ArrayConfig())
    terms = total_received_power(scene, placement, [device], field, 0, 4e9, params)
    assert terms.environment == pytest.approx(0.9 * 2.0 * 0.5)


def test_budget_noise_added_in_db():
    scene, placement, device, field = _setup(1)
    params = LinkParams(eta=0.0, tx_array=ArrayConfig(), rx_array=ArrayConfig())
    base = total_received_power(scene, placement, [device], field, 0, 4e9, params)
    noisy = total_received_power(scene, placement, [device], field, 0, 4e9, params,
                                 noise_sample_db=1.5)
    assert noisy.total_db - base.total_db == pytest.approx(1.5)


def test_budget_inverse_square_scaling():
    """Doubling both link distances drops the target term by 16x."""
    band = (3.5e9, 4.5e9)
    srr = calibrate_coupling(SrrDesign(45.0, 50e-9, 4.0e-14, 6e-4, 1e-5, 3.0, 0.0,
                                       MaterialModel("temperature", 2000.0, 3950.0, 298.15, 0.1)), band)
    device = DeviceDesign(srrs=(srr,), area=0.01)
    params = LinkParams(eta=0.0, tx_array=ArrayConfig(n_side=1), rx_array=ArrayConfig(n_side=1))
    f = 4.0e9

    def target_at(scale):
        # keep geometry similar: device on the x=0 wall, transceivers along x
        dims = (4.0 * scale, 4.0 * scale, 4.0 * scale)
        scene = build_scene(dims, 1.0 * scale, (1.0 * scale, 2.0 * scale, 2.0 * scale),
                            (2.0 * scale, 2.0 * scale, 2.0 * scale),
                            candidate_spacing=1.0 * scale, exclusion_radius=0.1,
                            n_conditions=1)
        field = EnvironmentField(np.full((scene.m_cells, 1), 298.15))
        target_pos = (0.0, 2.0 * scale, 2.0 * scale)
        d = [float(np.linalg.norm(np.asarray(target_pos) - scene.tx_pos)),
             float(np.linalg.norm(np.asarray(target_pos) - scene.rx_pos))]
        placement = PlacementSet((target_pos,))
        t = total_received_power(scene, placement, [device], field, 0, f, params)
        return float(t.target), d

    t1, d1 = target_at(1.0)
    t2, d2 = target_at(2.0)
    np.testing.assert_allclose(np.asarray(d2), 2.0 * np.asarray(d1), rtol=1e-12)
    assert t1 / t2 == pytest.approx(16.0, rel=1e-9)


def test_budget_argument_validation():
    scene, placement, device, field = _setup(2)
    params = LinkParams()
    with pytest.raises(ConfigError):
        total_received_power(scene, placement, [device] * 2, field, 5, 4e9, params)
    with pytest.raises(ConfigError):
        total_received_power(scene, placement, [device], field, 0, 4e9, params)
