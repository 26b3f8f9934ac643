import math

import numpy as np
import pytest

from carqlink.amc import AmcMode, AmcModeTable, per_awgn
from carqlink.analytic import Scenario, evaluate
from carqlink.constpower import (
    const_power_eta,
    const_power_policy,
    const_power_thresholds,
    direct_transmission,
    direct_transmission_report,
    direct_transmission_se,
    inversion_levels,
    optimize_const_power,
)
from carqlink.errors import ValidationError


def test_single_mode_level():
    t = AmcModeTable((AmcMode(1, 1.0, math.e, 1.0, 0.1),))
    s, r = const_power_thresholds(t, math.exp(-3), math.exp(-5))
    assert s[0] == pytest.approx(4.0, rel=1e-14)
    assert r[0] == pytest.approx(3.0, rel=1e-14)


def test_floor_applies():
    t = AmcModeTable((AmcMode(1, 1.0, math.e, 1.0, 10.0),))
    s, _ = const_power_thresholds(t, math.exp(-3), math.exp(-5))
    assert s[0] == 10.0


def test_symmetric_split_gives_equal_levels(table):
    s, r = const_power_thresholds(table, math.sqrt(1e-3), 1e-3)
    np.testing.assert_allclose(s, r, rtol=1e-12)


def test_bad_split_rejected(table):
    with pytest.raises(ValidationError):
        const_power_thresholds(table, 1e-4, 1e-3)


def test_levels_hit_target_per(table):
    levels, disabled = inversion_levels(table, 0.01)
    for m, lv in zip(table, levels):
        if m.index in disabled:
            continue
        assert per_awgn(m, lv) <= 0.01 * (1 + 1e-12)
    assert np.all(np.diff(levels) > 0)


def test_policy_is_constant_power(scenario_10db):
    pol = const_power_policy(scenario_10db, 0.05)
    assert not pol.power_adaptive
    rep = evaluate(scenario_10db, pol)
    # per-mode average PER never exceeds the value at the lower edge of the region
    assert np.all(rep.source_avg_pers <= 0.05 * (1 + 1e-9))
    assert rep.avg_power <= scenario_10db.p_bar + 1e-12


def test_optimum_at_10db(scenario_10db):
    _, p_t1, rep = optimize_const_power(scenario_10db)
    assert rep.spectral_efficiency == pytest.approx(1.723, abs=0.01)
    for p in (p_t1 / 2, min(0.99, p_t1 * 2)):
        assert const_power_eta(scenario_10db, p) <= rep.spectral_efficiency + 1e-9


def test_direct_transmission_bounds(scenario_10db, table):
    dt = direct_transmission(scenario_10db)
    assert 0 < dt.spectral_efficiency < table.rates.max()
    assert np.all(dt.avg_pers <= scenario_10db.p_loss * (1 + 1e-9))
    assert dt.avg_power <= scenario_10db.p_bar
    assert direct_transmission_se(scenario_10db) == dt.spectral_efficiency
    assert direct_transmission_report(scenario_10db).spectral_efficiency == dt.spectral_efficiency


def test_schemes_ordered_at_10db(scenario_10db):
    const = optimize_const_power(scenario_10db)[2].spectral_efficiency
    assert const > direct_transmission_se(scenario_10db)


def test_vanishing_snr_limit(table):
    sc = Scenario.from_db(-40.0, 0.0, table=table)
    assert direct_transmission_se(sc) < 1e-3
    assert const_power_eta(sc, 0.05) < 1e-3
