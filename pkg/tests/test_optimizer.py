import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_search_tr
from psnoma._validation import InfeasibleError
from psnoma.channel import NomaScenario
from psnoma.optimizer import (Atoms, SolverConfig, SpacingBounds, algorithm1,
                              capacity_noma, capacity_user, golden_section_delta,
                              initial_pmf, kkt_pmf, optimize_scenario, optimize_user,
                              pcm_baseline, run_fixed_point, silent_constellation,
                              uniform_baseline, uniform_capacity)
from psnoma.rates import (DivergenceKernel, InterferenceProfile, ShapedConstellation,
                          average_power, entropy, sdt_rate)

R_BF = 0.05


def single(osnr, M):
    return NomaScenario.from_osnr(osnr, 1, M, 0.0)


def check_constraints(res, scenario, interference=InterferenceProfile()):
    p = res.pmf
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
    power = average_power(res.spacing, p, float(res.code_rate))
    assert power == pytest.approx(scenario.received[res.user], rel=1e-9)
    r_sdt = sdt_rate(ShapedConstellation(p, res.spacing), float(res.code_rate),
                     scenario.sigma, interference)
    assert res.T <= r_sdt - R_BF + 1e-9
    assert res.T == pytest.approx(float(res.code_rate) * entropy(p), abs=1e-12)


def test_spacing_bounds():
    b = SpacingBounds.for_rate(4.0, 8, 1)
    assert (b.delta_min, b.delta_max) == pytest.approx((0.5, 4.0))
    b = SpacingBounds.for_rate(4.0, 8, Fraction(1, 2))
    assert b.delta_min == pytest.approx(4.0 / (4 + 2.25))
    assert b.delta_max == pytest.approx(4.0 / (0.5 + 2.25))
    with pytest.raises(ValueError):
        SpacingBounds(2.0, 1.0)


def test_kkt_uniform_at_midpoint_power():
    M, rate, delta = 8, 0.5, 0.3
    power = delta * (M + 1) / 2
    sol = kkt_pmf(delta, rate, np.zeros(M), power, 10.0, Atoms.free(M))
    assert sol.branch == 1
    np.testing.assert_allclose(sol.pmf, 1 / M, atol=1e-12)
    assert sol.multipliers.eta == pytest.approx(0.0, abs=1e-9)


def test_kkt_branch1_log_linear():
    M, rate, delta = 8, 0.75, 0.4
    power = 0.9 * delta * (M + 1) / 2
    sol = kkt_pmf(delta, rate, np.zeros(M), power, 10.0, Atoms.free(M))
    assert sol.branch == 1 and not sol.multipliers.rate_active
    steps = np.diff(np.log2(sol.pmf))
    np.testing.assert_allclose(steps, steps[0], atol=1e-9)
    assert steps[0] == pytest.approx(-sol.multipliers.eta * delta, rel=1e-9)


def test_kkt_branch2_activates_rate_constraint():
    scn = single(6.0, 4)
    res = optimize_user(0, Fraction(9, 10), scn)
    assert res.rate_active
    kernel = DivergenceKernel(res.constellation().amplitudes, 1.0)
    w = kernel.w_vector(res.pmf)
    budget = 0.1 * kernel.mutual_information(np.full(4, 0.25)) - R_BF
    sol = kkt_pmf(res.spacing, 0.9, w, scn.received[0], budget, Atoms.free(4))
    assert sol.branch == 2 and sol.multipliers.tau > 0
    # Active constraint: T equals the surrogate rate minus the back-off.
    assert abs(sol.rate_residual) <= 1e-6
    with pytest.raises(InfeasibleError):
        kkt_pmf(res.spacing, 0.9, w, scn.received[0], -5.0, Atoms.free(4))


def test_fixed_point_restart_is_stationary():
    scn = single(6.0, 4)
    cfg = SolverConfig()
    atoms = Atoms.free(4)
    delta, rate = 1.3, Fraction(1, 2)
    kernel = DivergenceKernel(delta * np.arange(1, 5), 1.0)
    fp = run_fixed_point(kernel, delta, rate, scn.received[0], atoms, cfg)
    again = run_fixed_point(kernel, delta, rate, scn.received[0], atoms, cfg,
                            start=fp.kkt.atoms_q)
    assert again.iterations == 1
    np.testing.assert_allclose(again.pmf, fp.pmf, atol=1e-4)


def test_algorithm1_m2_single_step():
    scn = single(4.0, 2)
    res = optimize_user(0, Fraction(1, 2), scn)
    pmf, iters = algorithm1(res.spacing, Fraction(1, 2), scn.received[0], 1.0, 2)
    assert iters <= 2
    np.testing.assert_allclose(pmf, res.pmf, atol=1e-9)


def test_initial_pmf_starts_on_power_plane():
    atoms = Atoms.free(8)
    for start in ("geometric", "edges"):
        p = initial_pmf(0.5, 0.75, 2.0, atoms, start=start)
        assert average_power(0.5, p, 0.75) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        initial_pmf(0.5, 0.75, 2.0, atoms, start="nope")


def test_golden_section_unimodal():
    b = SpacingBounds(0.2, 3.0)
    x, val, _ = golden_section_delta(lambda d: -(d - 1.234) ** 2, b, tol=1e-6)
    assert x == pytest.approx(1.234, abs=1e-6 * b.width * 2)
    x, _, _ = golden_section_delta(lambda d: -(d - 1.234) ** 2, b, tol=1e-6, grid_points=12)
    assert x == pytest.approx(1.234, abs=1e-5)
    x, val, _ = golden_section_delta(lambda d: 1.0, SpacingBounds(1.0, 1.0))
    assert x == 1.0


def test_golden_section_matches_grid_scan_fixed_uniform():
    scn = single(6.0, 8)
    p = np.full(8, 1 / 8)
    b = SpacingBounds.for_rate(scn.received[0], 8, 1)

    def objective(d):
        return sdt_rate(ShapedConstellation(p, d), 0.75, 1.0)

    x, _, _ = golden_section_delta(objective, b, tol=1e-4)
    grid = np.linspace(b.delta_min, b.delta_max, 1000)
    best = grid[np.argmax([objective(d) for d in grid])]
    assert abs(x - best) <= grid[1] - grid[0]


def test_golden_section_finds_only_feasible_plateau():
    b = SpacingBounds(0.0 + 1e-9, 1.0)
    x, val, _ = golden_section_delta(
        lambda d: 1.0 - d if d > 1 - 1e-4 else -math.inf, b, tol=1e-8, grid_points=12)
    assert np.isfinite(val) and x > 1 - 1e-4


@pytest.mark.parametrize("M,osnr,rate", [(2, 2.0, Fraction(1, 2)), (4, 6.0, Fraction(3, 4))])
def test_optimize_user_matches_grid_oracle(M, osnr, rate):
    res = optimize_user(0, rate, single(osnr, M))
    T_ref, _, _ = grid_search_tr(M, osnr, float(rate), step=0.01, n_delta=60, rounds=2)
    assert res.T == pytest.approx(T_ref, abs=1e-3)
    check_constraints(res, single(osnr, M))


def test_optimize_user_complementary_slackness():
    scn = single(6.0, 4)
    seen = set()
    for rate in (Fraction(1, 3), Fraction(1, 2), Fraction(9, 10)):
        res = optimize_user(0, rate, scn)
        seen.add(res.rate_active)
        gap = sdt_rate(res.constellation(), float(rate), 1.0) - R_BF - res.T
        if res.rate_active:
            # Tight against the surrogate at the previous iterate, hence nearly tight here.
            assert -1e-9 <= gap <= 1e-4
        else:
            assert gap > 0
    assert seen == {True, False}


def test_optimize_user_high_osnr_limit():
    res = optimize_user(0, Fraction(9, 10), single(30.0, 8))
    assert res.T == pytest.approx(0.9 * 3, abs=1e-3)


def test_optimize_user_infeasible():
    with pytest.raises(InfeasibleError):
        optimize_user(0, Fraction(9, 10), single(-10.0, 8))


def test_scale_covariance_exact():
    scn = single(6.0, 8)
    a = optimize_user(0, Fraction(3, 4), scn)
    b = optimize_user(0, Fraction(3, 4), scn.scaled(1e-5))
    assert b.spacing / a.spacing == pytest.approx(1e-5, rel=1e-9)
    np.testing.assert_allclose(b.pmf, a.pmf, atol=1e-9)
    assert b.T == pytest.approx(a.T, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.3, 2.0), st.floats(0.1, 0.9))
def test_surrogate_domination(seed, delta, rate):
    rng = np.random.default_rng(seed)
    M = 4
    p, p_hat = rng.dirichlet(np.ones(M)), rng.dirichlet(np.ones(M))
    kernel = DivergenceKernel(delta * np.arange(1, M + 1), 1.0)
    mi_u = kernel.mutual_information(np.full(M, 1 / M))

    def phi(p, ref):
        return rate * (entropy(p) - p @ kernel.w_vector(ref)) + (1 - rate) * mi_u

    r_sdt = rate * kernel.mutual_information(p) + (1 - rate) * mi_u
    assert phi(p, p_hat) <= r_sdt + 1e-9
    assert phi(p, p) == pytest.approx(r_sdt, abs=1e-9)


def test_optimize_scenario_chain_and_constraints():
    scn = NomaScenario.from_osnr(10.0, 2, 4, 6.0)
    res = optimize_scenario(scn)
    assert all(r is not None for r in res)
    intf = InterferenceProfile([res[1].constellation()])
    check_constraints(res[1], scn)
    check_constraints(res[0], scn, intf)
    one = optimize_scenario(single(10.0, 4))
    direct = max((optimize_user(0, r, single(10.0, 4)) for r in SolverConfig().rates
                  if _feasible(r, single(10.0, 4))), key=lambda x: x.T)
    assert one[0].T == pytest.approx(direct.T, abs=1e-9)


def _feasible(rate, scn):
    try:
        optimize_user(0, rate, scn)
        return True
    except InfeasibleError:
        return False


def test_infeasible_user_interferes_silently():
    scn = NomaScenario.from_osnr(1.0, 2, 8, 6.0)
    res = uniform_baseline(scn)
    assert res[1] is None
    silent = silent_constellation(scn, 1)
    assert average_power(silent.spacing, silent.pmf, 1.0) == pytest.approx(scn.received[1])


def test_pcm_structure():
    scn = NomaScenario.from_osnr(8.0, 1, 8, 0.0)
    res = pcm_baseline(scn)[0]
    np.testing.assert_array_equal(res.pmf[0::2], res.pmf[1::2])
    check_constraints(res, scn)
    m2 = pcm_baseline(single(8.0, 2))[0]
    np.testing.assert_allclose(m2.pmf, [0.5, 0.5], atol=1e-12)
    with pytest.raises(ValueError):
        Atoms.pairs(3)


def test_uniform_baseline_staircase():
    prev = 0.0
    for osnr in np.arange(0.0, 16.0, 1.5):
        scn = single(float(osnr), 8)
        res = uniform_baseline(scn)[0]
        T = 0.0 if res is None else res.T
        assert T >= prev
        prev = T
        if res is not None:
            assert res.spacing == pytest.approx(2 * scn.received[0] / 9)
            assert res.T == pytest.approx(float(res.code_rate) * 3)


def test_capacity_properties():
    c = capacity_user(0, single(30.0, 2))
    assert c.capacity == pytest.approx(1.0, abs=1e-6)
    for osnr in (0.0, 6.0):
        scn = NomaScenario.from_osnr(osnr, 2, 8, 6.0)
        cap = capacity_noma(scn)
        uni = uniform_capacity(scn)
        for a, b in zip(cap, uni):
            assert a.capacity >= b.capacity - 1e-9
        idx = np.arange(1, 9)
        assert cap[1].spacing * (idx @ cap[1].pmf) == pytest.approx(scn.received[1], rel=1e-9)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gamma_s=0)
    with pytest.raises(ValueError):
        SolverConfig(r_bf=-1)
    with pytest.raises(ValueError):
        SolverConfig(rates=(Fraction(3, 2),))
    assert SolverConfig(rates=("1/2", 0.75)).rates == (Fraction(1, 2), Fraction(3, 4))


def test_no_warnings_in_optimizer():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        optimize_user(0, Fraction(3, 4), single(6.0, 8))
