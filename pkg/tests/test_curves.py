import math

import numpy as np
import pytest

from psnoma.channel import NomaScenario
from psnoma.curves import (achievable_rate, close_region, curve_rows, distance_to_polyline,
                           osnr_grid, region_gap, solve_scheme, threshold_osnr, user_rate)


@pytest.mark.parametrize("osnr", [4.0, 12.0])
def test_scheme_ordering(osnr):
    # Interfered users see differently designed interferers under each scheme, so
    # the ordering is only guaranteed for the last user and for the sum.
    scn = NomaScenario.from_osnr(osnr, 2, 8, 6.0)
    rates = {s: [user_rate(r) for r in solve_scheme(scn, s)]
             for s in ("capacity", "proposed", "uniform")}
    assert rates["capacity"][-1] >= rates["proposed"][-1] >= rates["uniform"][-1]
    assert sum(rates["capacity"]) >= sum(rates["proposed"]) >= sum(rates["uniform"])


def test_curve_rows_sum():
    scn = NomaScenario.from_osnr(8.0, 2, 4, 6.0)
    rows = curve_rows(scn, "uniform")
    assert [r["user"] for r in rows] == [1, 2, "sum"]
    assert rows[-1]["rate"] == pytest.approx(rows[0]["rate"] + rows[1]["rate"])
    with pytest.raises(ValueError):
        solve_scheme(scn, "nope")


def test_threshold_osnr_bisection():
    f = lambda x: max(0.0, x / 10)
    assert threshold_osnr(f, 1.0, 0.0, 20.0, tol=1e-3) == pytest.approx(10.0, abs=1e-3)
    assert threshold_osnr(f, 5.0, 0.0, 20.0) == math.inf
    assert threshold_osnr(f, 0.0, 0.0, 20.0) == 0.0


def test_achievable_rate_and_user_rate_of_none():
    assert user_rate(None) == 0.0
    assert achievable_rate(None) == 0.0


def test_polyline_distance():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    assert distance_to_polyline([0.5, 0.3], poly) == pytest.approx(0.3)
    assert distance_to_polyline([2.0, 2.0], poly) == pytest.approx(math.sqrt(2))
    assert distance_to_polyline([1.0, 0.5], poly) == 0.0


def test_region_gap_closes_to_axes():
    outer = np.array([[1.0, 2.0], [2.0, 1.0]])
    np.testing.assert_array_equal(close_region(outer),
                                  [[0, 2], [1, 2], [2, 1], [2, 0]])
    # An inner point on the extended vertical edge is at distance 0.
    gaps = region_gap([[2.0, 0.5], [1.0, 1.0]], outer)
    assert gaps[0] == 0.0
    assert gaps[1] == pytest.approx(1 / math.sqrt(2))


def test_osnr_grid():
    assert osnr_grid(0, 1, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert osnr_grid(0, 20, 2)[-1] == 20
