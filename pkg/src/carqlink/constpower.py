"""Constant-power adaptive-rate schemes: C-ARQ and the direct-transmission baseline.

Transmit power stays at its nominal value, so the only knobs are the switching
levels. Each level is the SNR at which its mode reaches the target PER of that
link, floored at gamma_p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .amc import AmcModeTable, power_gains
from .analytic import DEFAULT_OMEGA, AdaptationPolicy, PerformanceReport, Scenario, enforce_increasing, evaluate
from .channel import avg_pers_constant_power, mode_probabilities
from .errors import ValidationError
from .optimizer import golden_section_max


def inversion_levels(table: AmcModeTable, target_per: float):
    """max(ln(a_n / target) / g_n, gamma_p), nudged to strictly increase.

    Returns ``(levels, disabled_modes)``.
    """
    return enforce_increasing(np.maximum(power_gains(table, target_per), table.gamma_p))


def const_power_thresholds(
    table: AmcModeTable, p_t1: float, p_loss: float, relay_table: Optional[AmcModeTable] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Source levels for target ``p_t1`` and relay levels for ``p_loss / p_t1``."""
    if not 0 < p_loss < p_t1 < 1:
        raise ValidationError(f"need 0 < p_loss < p_t1 < 1, got p_loss={p_loss}, p_t1={p_t1}")
    s, _ = inversion_levels(table, p_t1)
    r, _ = inversion_levels(relay_table or table, p_loss / p_t1)
    return s, r


def const_power_policy(scenario: Scenario, p_t1: float) -> AdaptationPolicy:
    table, relay_table = scenario.table, scenario.relay_table
    if not scenario.p_loss < p_t1 < 1:
        raise ValidationError(f"p_t1 must lie in ({scenario.p_loss}, 1), got {p_t1}")
    p_t2 = scenario.p_loss / p_t1
    s, s_dis = inversion_levels(table, p_t1)
    r, r_dis = inversion_levels(relay_table, p_t2)
    return AdaptationPolicy(
        source_thresholds=s,
        relay_thresholds=r,
        source_gains=power_gains(table, p_t1),
        relay_gains=power_gains(relay_table, p_t2),
        target_per_source=p_t1,
        target_per_relay=p_t2,
        power_adaptive=False,
        disabled_source=s_dis,
        disabled_relay=r_dis,
    )


def const_power_eta(scenario: Scenario, p_t1: float) -> float:
    return evaluate(scenario, const_power_policy(scenario, p_t1)).spectral_efficiency


def optimize_const_power(scenario: Scenario, tol: float = 1e-4, omega_variant: str = DEFAULT_OMEGA):
    """Golden-section search of the constant-power C-ARQ efficiency over p_t1.

    Returns ``(policy, p_t1_star, report)``.
    """
    lo, hi = scenario.p_loss * 1.0001, 0.9999
    x, _, cache = golden_section_max(lambda p: const_power_eta(scenario, p), lo, hi, tol)
    policy = const_power_policy(scenario, x)
    report = evaluate(scenario, policy, omega_variant)
    report.extras.update({"p_t1_star": x, "p_t2_star": scenario.p_loss / x, "outer_evaluations": len(cache)})
    return policy, x, report


@dataclass
class DirectTransmission:
    """Constant-power AMC on the source-destination link, no retransmission."""

    thresholds: np.ndarray
    mode_probabilities: np.ndarray
    avg_pers: np.ndarray
    spectral_efficiency: float
    avg_power: float


def direct_transmission(scenario: Scenario) -> DirectTransmission:
    levels, _ = inversion_levels(scenario.table, scenario.p_loss)
    link = scenario.source_link
    p = mode_probabilities(link, levels)
    per = avg_pers_constant_power(link, levels, scenario.table)
    eta = float(np.sum(scenario.source_rates * (1.0 - per) * p))
    return DirectTransmission(levels, p, per, eta, scenario.p_bar_s * float(p.sum()))


def direct_transmission_se(scenario: Scenario) -> float:
    return direct_transmission(scenario).spectral_efficiency


def direct_transmission_report(scenario: Scenario) -> PerformanceReport:
    dt = direct_transmission(scenario)
    n_relay = len(scenario.relay_table)
    return PerformanceReport(
        spectral_efficiency=dt.spectral_efficiency,
        avg_power=dt.avg_power,
        source_mode_probabilities=dt.mode_probabilities,
        relay_mode_probabilities=np.zeros(n_relay),
        source_avg_pers=dt.avg_pers,
        relay_avg_pers=np.full(n_relay, math.nan),
        omega=math.nan,
        omega_appendix=math.nan,
        omega_variant="none",
        extras={"thresholds": dt.thresholds},
    )
