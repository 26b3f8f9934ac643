import math

import numpy as np
import pytest

from carqlink.analytic import Scenario, average_power, spectral_efficiency
from carqlink.errors import InfeasibleError, ValidationError
from carqlink.optimizer import (
    OptimizerConfig,
    audit_quasiconcavity,
    count_local_maxima,
    eta_of_pt1,
    golden_section_max,
    initial_thresholds,
    iterate,
    optimize,
    relay_levels,
    solve_lambda,
    source_levels,
)


def test_zero_multiplier_gives_floors(scenario_10db, table):
    s, disabled = source_levels(scenario_10db, 0.05, table.gamma_p, 0.0)
    np.testing.assert_array_equal(s, table.gamma_p)
    assert disabled == ()
    r, _ = relay_levels(scenario_10db, 0.05, table.gamma_p, 1.0, 0.0)
    np.testing.assert_array_equal(r, table.gamma_p)


def test_levels_grow_with_multiplier(scenario_10db, table):
    prev = None
    for lam in np.logspace(-2, 3, 12):
        s, _ = source_levels(scenario_10db, 0.05, table.gamma_p * 2, lam)
        r, _ = relay_levels(scenario_10db, 0.05, table.gamma_p * 2, lam, 0.05)
        cur = np.concatenate([s, r])
        if prev is not None:
            assert np.all(cur >= prev)
        prev = cur
    assert np.all(np.diff(s) > 0)


def test_negative_multiplier_rejected(scenario_10db, table):
    with pytest.raises(ValidationError):
        source_levels(scenario_10db, 0.05, table.gamma_p, -1.0)
    with pytest.raises(ValidationError):
        relay_levels(scenario_10db, 0.05, table.gamma_p, 1.0, -0.1)


def test_config_validation():
    with pytest.raises(ValidationError):
        OptimizerConfig(max_iterations=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(lambda_bracket=(1.0, 0.5))
    with pytest.raises(ValidationError):
        OptimizerConfig(initial_thresholds="user")
    with pytest.raises(ValidationError):
        OptimizerConfig(update_order="random")


def test_solve_lambda_spends_budget(scenario_10db, table):
    phi = 0.5
    lam, s, r = solve_lambda(scenario_10db, 0.05, (table.gamma_p, table.gamma_p), phi)
    assert lam > 0
    from carqlink.analytic import power_constraint_lhs
    from carqlink.optimizer import _policy

    lhs = power_constraint_lhs(scenario_10db, _policy(scenario_10db, 0.05, s, r), phi)
    budget = scenario_10db.p_bar * (1 + phi * 0.05)
    assert lhs <= budget * (1 + 1e-9)
    assert lhs == pytest.approx(budget, rel=1e-8)


def test_lambda_zero_when_budget_slack(table):
    sc = Scenario.from_db(0.0, 0.0, table=table)
    lam, s, _ = solve_lambda(sc, 0.01, (table.gamma_p, table.gamma_p), 0.3)
    assert lam == 0.0
    np.testing.assert_array_equal(s[0], table.gamma_p)


def test_infeasible_when_multiplier_capped(scenario_10db):
    cfg = OptimizerConfig(lambda_bracket=(0.0, 1e-9), lambda_cap=1e-8)
    with pytest.raises(InfeasibleError, match="C1"):
        iterate(scenario_10db, 0.05, cfg)
    assert eta_of_pt1(scenario_10db, cfg)(0.05) == -math.inf


def test_table_one_optimum(optimum_10db, scenario_10db):
    policy, p_t1, report = optimum_10db
    assert report.spectral_efficiency == pytest.approx(1.911, abs=0.02)
    assert scenario_10db.p_loss < p_t1 < 1
    assert average_power(scenario_10db, policy) <= scenario_10db.p_bar * (1 + 1e-6)
    assert report.extras["converged"]
    assert policy.target_per_source * policy.target_per_relay == pytest.approx(scenario_10db.p_loss, rel=1e-12)


def test_random_starts_reach_common_value(scenario_10db, optimum_10db):
    _, p_t1, _ = optimum_10db
    cfg = OptimizerConfig(initial_thresholds="random")
    rng = np.random.default_rng(11)
    finals = []
    for _ in range(5):
        _, trace = iterate(scenario_10db, p_t1, cfg, rng=rng)
        assert trace.converged
        finals.append(trace.etas[-1])
    assert np.ptp(finals) < 1e-3


def test_update_orders_agree(scenario_10db):
    a = iterate(scenario_10db, 0.05, OptimizerConfig(update_order="source_first"))[1]
    b = iterate(scenario_10db, 0.05, OptimizerConfig(update_order="jacobi"))[1]
    assert a.etas[-1] == pytest.approx(b.etas[-1], abs=1e-3)


def test_user_start(scenario_10db, table):
    cfg = OptimizerConfig(initial_thresholds="user", user_thresholds=(table.gamma_p * 3, table.gamma_p * 3))
    s, r = initial_thresholds(scenario_10db, cfg)
    np.testing.assert_allclose(s, table.gamma_p * 3)
    _, trace = iterate(scenario_10db, 0.05, cfg)
    assert trace.records[0].eta == pytest.approx(trace.etas[0])


def test_pt1_outside_interval(scenario_10db):
    with pytest.raises(ValidationError, match="p_t1"):
        iterate(scenario_10db, 1e-4)


def test_single_mode_beats_dense_scan(table):
    sc = Scenario.from_db(10.0, 0.0, table=table.subset([3]))
    _, _, rep = optimize(sc)
    f = eta_of_pt1(sc)
    scan = max(f(p) for p in np.linspace(0.0011, 0.2, 40))
    assert rep.spectral_efficiency >= scan - 1e-6


def test_quasiconcave_at_reference_point(scenario_10db):
    audit = audit_quasiconcavity(scenario_10db, num=30)
    assert audit["local_maxima"] == 1


def test_target_per_rises_as_snr_drops_at_high_snr(table):
    # holds in the upper half of the sweep; below about 8 dB the trend reverses
    hi = optimize(Scenario.from_db(16.0, 0.0, table=table))[1]
    mid = optimize(Scenario.from_db(12.0, 0.0, table=table))[1]
    assert mid > hi


def test_golden_section_parabola():
    x, fx, cache = golden_section_max(lambda t: -((t - 0.3) ** 2), 0.0, 1.0, tol=1e-8)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert len(cache) < 100


def test_golden_section_boundary_max():
    x, _, _ = golden_section_max(lambda t: -t, 0.1, 0.9, tol=1e-6)
    assert x == 0.1


@pytest.mark.parametrize(
    "values,expected",
    [
        ([1, 2, 3, 2, 1], 1),
        ([3, 2, 1], 1),
        ([1, 2, 3], 1),
        ([1, 3, 1, 3, 1], 2),
        ([1, 1, 1], 1),
        ([1, 2, 2 - 1e-9, 2, 1], 1),
    ],
)
def test_count_local_maxima(values, expected):
    assert count_local_maxima(values, 1e-6) == expected


def test_eta_matches_policy(scenario_10db):
    pol, _ = iterate(scenario_10db, 0.05)
    assert eta_of_pt1(scenario_10db)(0.05) == pytest.approx(spectral_efficiency(scenario_10db, pol))
