import dataclasses

import numpy as np
import pytest

from carqlink.amc import AmcMode, AmcModeTable
from carqlink.analytic import Scenario, build_power_policy, evaluate
from carqlink.channel import mode_probabilities
from carqlink.errors import ValidationError
from carqlink.simulator import SimConfig, compare, format_compare, simulate

FAST = SimConfig(packet_budget=200_000, n_batches=20, seed=3)


@pytest.fixture(scope="module")
def policy_10db(scenario_10db, table):
    return build_power_policy(scenario_10db, 0.05, table.gamma_p * 1.5, table.gamma_p * 2.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        SimConfig(estimator_mode="bogus")
    with pytest.raises(ValidationError):
        SimConfig(packet_budget=10, n_batches=20)


def test_deterministic_for_seed(scenario_10db, policy_10db):
    a = simulate(scenario_10db, policy_10db, FAST)
    b = simulate(scenario_10db, policy_10db, FAST)
    np.testing.assert_array_equal(a.batches, b.batches)
    c = simulate(scenario_10db, policy_10db, dataclasses.replace(FAST, seed=4))
    assert not np.array_equal(a.batches, c.batches)


def test_worker_count_does_not_change_result(scenario_10db, policy_10db):
    a = simulate(scenario_10db, policy_10db, FAST)
    b = simulate(scenario_10db, policy_10db, dataclasses.replace(FAST, n_jobs=2))
    np.testing.assert_array_equal(a.batches, b.batches)


def test_packet_conservation(scenario_10db, policy_10db):
    c = simulate(scenario_10db, policy_10db, FAST).counts
    assert c["first_ok"] + c["recovered"] + c["lost"] == pytest.approx(c["sent"], rel=1e-12)
    assert c["frames"] == FAST.packet_budget
    assert c["lost_outage"] <= c["lost"]


def test_error_free_links(scenario_10db, policy_10db, table):
    pol = policy_10db.with_gains(np.full(6, 1e4), np.full(6, 1e4))
    est = simulate(scenario_10db, pol, FAST)
    assert est.counts["lost"] == 0
    assert est.counts["relay_tx"] == 0
    mass = float(table.rates @ mode_probabilities(scenario_10db.source_link, pol.source_thresholds))
    assert abs(est.se_per_packet.z(mass)) < 4


def test_alpha_leaves_power_unchanged(scenario_10db, policy_10db):
    a = simulate(scenario_10db, policy_10db, FAST)
    b = simulate(scenario_10db, policy_10db, dataclasses.replace(FAST, alpha=0.25))
    pa, pb = a.avg_power_ratio_totals, b.avg_power_ratio_totals
    assert abs(pa.value - pb.value) <= 3 * max(pa.stderr, pb.stderr)
    assert b.slot_ratio_J_over_I.value == pytest.approx(2 * a.slot_ratio_J_over_I.value)


def test_compare_consistent(scenario_10db, policy_10db):
    rep = compare(scenario_10db, policy_10db, SimConfig(packet_budget=1_000_000, seed=1))
    m = rep["metrics"]
    assert not m["spectral_efficiency"]["flag"]
    assert not m["plr"]["flag"]
    assert not m["avg_power_factorized"]["flag"]
    assert not m["slot_ratio_appendixB"]["flag"]
    text = format_compare(rep)
    assert "spectral_efficiency.z=" in text and text.endswith("\n")


def test_compare_flags_wrong_gains(scenario_10db, policy_10db):
    broken = policy_10db.with_gains(policy_10db.source_gains * 0.8)
    rep = compare(scenario_10db, broken, SimConfig(packet_budget=500_000, seed=1))
    assert rep["any_flag"]
    assert rep["metrics"]["plr"]["flag"]


def test_single_mode_slot_ratio():
    t = AmcModeTable((AmcMode(1, 1.5, 67.6181, 1.6883, 2.5),))
    sc = Scenario.from_db(10.0, 0.0, table=t)
    pol = build_power_policy(sc, 0.05, [3.0], [3.0])
    est = simulate(sc, pol, SimConfig(packet_budget=1_000_000, seed=2))
    rep = evaluate(sc, pol)
    expected = pol.target_per_source * rep.omega_appendix / 0.5
    assert abs(est.slot_ratio_J_over_I.z(expected)) < 4


def test_constant_power_policy_runs(scenario_10db):
    from carqlink.constpower import const_power_policy

    pol = const_power_policy(scenario_10db, 0.05)
    est = simulate(scenario_10db, pol, FAST)
    assert est.avg_power_ratio_totals.value <= scenario_10db.p_bar * (1 + 1e-12)


def test_batch_csv(scenario_10db, policy_10db):
    est = simulate(scenario_10db, policy_10db, SimConfig(packet_budget=1000, n_batches=4))
    lines = est.batch_csv().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("batch,frames,")


def test_mismatched_policy(scenario_10db, table):
    sub = Scenario.from_db(10.0, 0.0, table=table.subset([1, 2]))
    pol = build_power_policy(sub, 0.05, sub.table.gamma_p, sub.table.gamma_p)
    with pytest.raises(ValidationError):
        simulate(scenario_10db, pol, FAST)
