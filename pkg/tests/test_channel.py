import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psnoma._validation import InfeasibleError
from psnoma.channel import (ChannelGeometry, NomaScenario, lambert_mode, lambertian_gain,
                            load_scenario, osnr_to_power, power_backoff, power_to_osnr,
                            received_powers, scenario_from_dict)

# Frozen from a 30-digit mpmath evaluation of the closed forms.
LAMBERT_MODE_30DEG = 4.818841679306418
GAIN_M1_2M_30DEG = 5.968310365946075e-06


def test_lambert_mode_values():
    assert lambert_mode(math.radians(60)) == pytest.approx(1.0, rel=1e-14)
    assert lambert_mode(math.radians(45)) == pytest.approx(2.0, rel=1e-14)
    assert lambert_mode(math.radians(30)) == pytest.approx(LAMBERT_MODE_30DEG, rel=1e-14)


@pytest.mark.parametrize("angle", [0.0, math.pi / 2, -0.1, 2.0])
def test_lambert_mode_domain(angle):
    with pytest.raises(ValueError):
        lambert_mode(angle)


def test_gain_on_axis_and_reference():
    on_axis = ChannelGeometry.from_degrees(2.0, 1e-4, 60, 0, 0, 60)
    assert lambertian_gain(on_axis) == pytest.approx(2 * 1e-4 / (2 * math.pi * 4), rel=1e-14)
    tilted = ChannelGeometry.from_degrees(2.0, 1e-4, 60, 30, 30, 60)
    assert lambertian_gain(tilted) == pytest.approx(GAIN_M1_2M_30DEG, rel=1e-12)


def test_gain_outside_fov_is_zero():
    g = ChannelGeometry.from_degrees(2.0, 1e-4, 30, 31, 0, 60)
    assert lambertian_gain(g) == 0.0


def test_geometry_validation():
    with pytest.raises(ValueError):
        ChannelGeometry(0.0, 1e-4, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ChannelGeometry(1.0, 1e-4, 2.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ChannelGeometry(1.0, 1e-4, 1.0, 0.0, 0.0, 1.0, filter_gain=-1)


def test_power_backoff_examples():
    assert power_backoff(1.0, 1.0, 1.0, 2) == 0.0
    assert power_backoff(10.0, 1.0, 1.0, 2) == pytest.approx(10.0)
    assert power_backoff(100.0, 1.0, 1.0, 3) == pytest.approx(10.0)
    with pytest.raises(InfeasibleError):
        power_backoff(0.5, 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        power_backoff(1.0, 1.0, 1.0, 1)


def test_received_powers_examples():
    assert received_powers(2.5, 4.0, 3)[-1] == 2.5
    assert received_powers(1.0, 3.0, 2)[0] == pytest.approx(1.9952623149688795)
    np.testing.assert_allclose(received_powers(1.0, 10.0, 3), [100.0, 10.0, 1.0])
    with pytest.raises(ValueError):
        received_powers(1.0, -1.0, 2)


def test_backoff_puts_user1_at_pmax():
    gains = [2e-5, 5e-6, 1e-5]
    scn = NomaScenario.from_gains(gains, 8, 1e-7, p_max=1.0, p_rn=1e-6)
    assert scn.gains == (5e-6, 1e-5, 2e-5)
    assert scn.user_ids == (1, 2, 0)
    assert scn.received[0] / scn.gains[0] == pytest.approx(1.0, rel=1e-12)
    for p, h in zip(scn.received, scn.gains):
        assert p / h <= 1.0 * (1 + 1e-9)


def test_scenario_rejects_bad_order_and_power():
    with pytest.raises(ValueError):
        NomaScenario((2.0, 1.0), 4, 1.0, (2.0, 1.0), 10.0)
    with pytest.raises(InfeasibleError):
        NomaScenario((1.0, 1.0), 4, 1.0, (20.0, 1.0), 10.0)
    with pytest.raises(ValueError):
        NomaScenario((1.0,), 3, 1.0, (1.0,), 10.0)
    with pytest.raises(ValueError):
        NomaScenario((1.0,), 4, 0.0, (1.0,), 10.0)


def test_from_osnr_round_trip():
    scn = NomaScenario.from_osnr(7.5, 3, 8, 6.0, sigma=0.2)
    assert scn.osnr_db == pytest.approx(7.5, abs=1e-12)
    ratio = 10 * np.log10(np.array(scn.received[:-1]) / np.array(scn.received[1:]))
    np.testing.assert_allclose(ratio, 6.0, atol=1e-12)


@given(st.floats(-20, 40), st.floats(1e-6, 1e3))
def test_osnr_power_inverse(osnr, sigma):
    assert power_to_osnr(osnr_to_power(osnr, sigma), sigma) == pytest.approx(osnr, abs=1e-9)


@settings(max_examples=50)
@given(st.floats(1e-6, 1e3), st.floats(0, 12), st.integers(2, 5))
def test_received_powers_chain(p_rn, c, n):
    p = received_powers(p_rn, c, n)
    assert p[-1] == p_rn
    assert np.all(np.diff(p) <= 0)
    np.testing.assert_allclose(p[:-1] / p[1:], 10 ** (c / 10), rtol=1e-12)


def test_load_scenario_file(tmp_path):
    path = tmp_path / "scn.json"
    path.write_text(json.dumps({
        "users": [{"h": 1e-5}, {"geometry": {"distance": 2.0, "detector_area": 1e-4,
                                             "fov": 60, "arrival_angle": 0,
                                             "departure_angle": 0, "half_power_angle": 60}}],
        "M": 4, "sigma": 1e-7, "P_max": 1.0, "P_rN": 1e-6}))
    scn = load_scenario(path)
    assert scn.M == 4 and scn.n_users == 2
    # The on-axis geometry gives 2e-4/(8 pi) < 1e-5, so it becomes user 1.
    assert scn.gains == pytest.approx((2e-4 / (8 * math.pi), 1e-5))
    assert scn.user_ids == (1, 0)
    with pytest.raises(ValueError):
        scenario_from_dict({"users": [{}], "M": 4, "sigma": 1, "P_max": 1, "P_rN": 1})
