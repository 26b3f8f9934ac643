"""Closed-form spectral efficiency and average power of the C-ARQ relay link."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .amc import AmcModeTable, db_to_linear, load_mode_table, power_gains
from .channel import (
    LinkModel,
    avg_pers_constant_power,
    check_thresholds,
    mode_probabilities,
    region_inverse_snr,
)
from .errors import ValidationError

OMEGA_VARIANTS = ("prop2", "appendixB")
DEFAULT_OMEGA = "appendixB"


@dataclass(frozen=True)
class Scenario:
    """A full problem instance. Powers and SNRs are linear.

    ``relay_table`` defaults to the source table. ``alpha`` only matters to
    the simulator. ``mu_db`` is kept for reporting; the relay link mean
    already includes it.
    """

    table: AmcModeTable
    source_link: LinkModel
    relay_link: LinkModel
    p_bar: float
    p_bar_s: float
    p_bar_r: float
    p_loss: float = 1e-3
    alpha: float = 0.5
    mu_db: float = 0.0
    relay_table: Optional[AmcModeTable] = None

    def __post_init__(self):
        if self.relay_table is None:
            object.__setattr__(self, "relay_table", self.table)
        if not 0 < self.p_loss < 1:
            raise ValidationError(f"p_loss must lie in (0, 1), got {self.p_loss}")
        for name in ("p_bar", "p_bar_s", "p_bar_r"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive and finite, got {v}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        for t, label in ((self.table, "source"), (self.relay_table, "relay")):
            if np.any(t.gamma_p <= 0):
                raise ValidationError(
                    f"{label} table: gamma_p of mode 1 must be > 0 so channel inversion has finite power"
                )

    @classmethod
    def from_db(
        cls,
        p_bar_db: float = 10.0,
        mu_db: float = 0.0,
        p_loss: float = 1e-3,
        alpha: float = 0.5,
        table: Optional[AmcModeTable] = None,
        p_bar_s_db: Optional[float] = None,
        p_bar_r_db: Optional[float] = None,
        source_mean_snr_db: Optional[float] = None,
        relay_mean_snr_db: Optional[float] = None,
        relay_table: Optional[AmcModeTable] = None,
    ) -> "Scenario":
        """Numerical-results setup: mean SNRs P_s and mu*P_r, with P_s = P_r = P by default."""
        table = load_mode_table() if table is None else table
        p_bar = float(db_to_linear(p_bar_db))
        p_s = p_bar if p_bar_s_db is None else float(db_to_linear(p_bar_s_db))
        p_r = p_bar if p_bar_r_db is None else float(db_to_linear(p_bar_r_db))
        g1 = p_s if source_mean_snr_db is None else float(db_to_linear(source_mean_snr_db))
        g2 = float(db_to_linear(mu_db)) * p_r if relay_mean_snr_db is None else float(db_to_linear(relay_mean_snr_db))
        return cls(
            table=table,
            source_link=LinkModel(g1, "source"),
            relay_link=LinkModel(g2, "relay"),
            p_bar=p_bar,
            p_bar_s=p_s,
            p_bar_r=p_r,
            p_loss=p_loss,
            alpha=alpha,
            mu_db=mu_db,
            relay_table=relay_table,
        )

    @property
    def source_rates(self) -> np.ndarray:
        return self.table.rates

    @property
    def relay_rates(self) -> np.ndarray:
        return self.relay_table.rates


@dataclass(frozen=True)
class AdaptationPolicy:
    """Switching levels and power gains for both links.

    Under power adaptation the source sends mode n with power
    ``p_bar_s * source_gains[n] / snr``; otherwise at ``p_bar_s``.
    ``disabled_source``/``disabled_relay`` list 1-based modes whose region was
    squeezed to zero width when enforcing strictly increasing levels.
    """

    source_thresholds: np.ndarray
    relay_thresholds: np.ndarray
    source_gains: np.ndarray
    relay_gains: np.ndarray
    target_per_source: float
    target_per_relay: float
    power_adaptive: bool = True
    disabled_source: tuple = ()
    disabled_relay: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "source_thresholds", check_thresholds(self.source_thresholds, "source thresholds"))
        object.__setattr__(self, "relay_thresholds", check_thresholds(self.relay_thresholds, "relay thresholds"))
        object.__setattr__(self, "source_gains", np.asarray(self.source_gains, dtype=float))
        object.__setattr__(self, "relay_gains", np.asarray(self.relay_gains, dtype=float))

    def with_gains(self, source_gains=None, relay_gains=None) -> "AdaptationPolicy":
        return replace(
            self,
            source_gains=self.source_gains if source_gains is None else source_gains,
            relay_gains=self.relay_gains if relay_gains is None else relay_gains,
        )


@dataclass
class PerformanceReport:
    spectral_efficiency: float
    avg_power: Optional[float]
    source_mode_probabilities: np.ndarray
    relay_mode_probabilities: np.ndarray
    source_avg_pers: np.ndarray
    relay_avg_pers: np.ndarray
    omega: float
    omega_appendix: float
    omega_variant: str = DEFAULT_OMEGA
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "spectral_efficiency": self.spectral_efficiency,
            "avg_power": self.avg_power,
            "omega_prop2": self.omega,
            "omega_appendixB": self.omega_appendix,
            "omega_variant": self.omega_variant,
        }
        for k, v in enumerate(self.source_mode_probabilities, start=1):
            out[f"pi_source_{k}"] = float(v)
        for k, v in enumerate(self.relay_mode_probabilities, start=1):
            out[f"pi_relay_{k}"] = float(v)
        out.update(self.extras)
        return out


def _check_variant(variant):
    if variant not in OMEGA_VARIANTS:
        raise ValidationError(f"omega variant must be one of {OMEGA_VARIANTS}, got {variant!r}")


def harmonic_rate_matrix(source_rates, relay_rates) -> np.ndarray:
    """R_n R_m / (R_n + R_m): bits per symbol of a packet sent once by each node."""
    rs = np.asarray(source_rates, dtype=float)[:, None]
    rr = np.asarray(relay_rates, dtype=float)[None, :]
    return rs * rr / (rs + rr)


def rate_ratio_matrix(source_rates, relay_rates) -> np.ndarray:
    """R_n / R_m: relay air time per failed packet relative to source air time."""
    return np.asarray(source_rates, dtype=float)[:, None] / np.asarray(relay_rates, dtype=float)[None, :]


def _weights(scenario: Scenario, variant: str) -> np.ndarray:
    _check_variant(variant)
    if variant == "prop2":
        return harmonic_rate_matrix(scenario.source_rates, scenario.relay_rates)
    return rate_ratio_matrix(scenario.source_rates, scenario.relay_rates)


def omega(scenario: Scenario, source_thresholds, relay_thresholds) -> float:
    """Sum_n Sum_m R_n R_m/(R_n+R_m) pi_2m pi_1n (harmonic-rate weighting)."""
    p1 = mode_probabilities(scenario.source_link, source_thresholds)
    p2 = mode_probabilities(scenario.relay_link, relay_thresholds)
    return float(p1 @ harmonic_rate_matrix(scenario.source_rates, scenario.relay_rates) @ p2)


def omega_appendix(scenario: Scenario, source_thresholds, relay_thresholds) -> float:
    """Sum_n Sum_m (R_n/R_m) pi_2m pi_1n, the relay-to-source slot ratio per failure."""
    p1 = mode_probabilities(scenario.source_link, source_thresholds)
    p2 = mode_probabilities(scenario.relay_link, relay_thresholds)
    return float(p1 @ rate_ratio_matrix(scenario.source_rates, scenario.relay_rates) @ p2)


def omega_value(scenario, source_thresholds, relay_thresholds, variant: str = DEFAULT_OMEGA) -> float:
    _check_variant(variant)
    if variant == "prop2":
        return omega(scenario, source_thresholds, relay_thresholds)
    return omega_appendix(scenario, source_thresholds, relay_thresholds)


def instantaneous_plr(per_source: float, per_relay: float) -> float:
    """A packet is lost only when both the source and the relay attempt fail."""
    for name, v in (("per_source", per_source), ("per_relay", per_relay)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {v}")
    return per_source * per_relay


def mode_avg_pers(scenario: Scenario, policy: AdaptationPolicy):
    """Per-mode conditional PERs on both links.

    Power adaptation pins the post-adaptation SNR to the gain, so the PER is
    the target itself; constant power averages the fit over each region.
    """
    if policy.power_adaptive:
        return (
            np.full(len(scenario.table), policy.target_per_source),
            np.full(len(scenario.relay_table), policy.target_per_relay),
        )
    return (
        avg_pers_constant_power(scenario.source_link, policy.source_thresholds, scenario.table),
        avg_pers_constant_power(scenario.relay_link, policy.relay_thresholds, scenario.relay_table),
    )


def spectral_efficiency_from(rs, rr, p1, p2, per1, per2) -> float:
    c = harmonic_rate_matrix(rs, rr)
    direct = float(np.sum(rs * (1.0 - per1) * p1))
    relayed = float((per1 * p1) @ c @ ((1.0 - per2) * p2))
    return direct + relayed


def spectral_efficiency(scenario: Scenario, policy: AdaptationPolicy) -> float:
    """Average accepted bits per transmitted symbol.

    First-attempt successes earn R_n; packets rescued by the relay earn the
    combined rate R_n R_m / (R_n + R_m); everything else earns zero.
    """
    p1 = mode_probabilities(scenario.source_link, policy.source_thresholds)
    p2 = mode_probabilities(scenario.relay_link, policy.relay_thresholds)
    per1, per2 = mode_avg_pers(scenario, policy)
    return spectral_efficiency_from(scenario.source_rates, scenario.relay_rates, p1, p2, per1, per2)


def expected_source_power(scenario: Scenario, policy: AdaptationPolicy) -> float:
    if policy.power_adaptive:
        inv = region_inverse_snr(scenario.source_link, policy.source_thresholds)
        return float(scenario.p_bar_s * policy.source_gains @ inv)
    return scenario.p_bar_s * float(mode_probabilities(scenario.source_link, policy.source_thresholds).sum())


def expected_relay_power(scenario: Scenario, policy: AdaptationPolicy) -> float:
    if policy.power_adaptive:
        inv = region_inverse_snr(scenario.relay_link, policy.relay_thresholds)
        return float(scenario.p_bar_r * policy.relay_gains @ inv)
    return scenario.p_bar_r * float(mode_probabilities(scenario.relay_link, policy.relay_thresholds).sum())


def relay_load(scenario: Scenario, policy: AdaptationPolicy, variant: str = DEFAULT_OMEGA) -> float:
    """Failure-weighted omega: Sum w_nm PER_1n pi_1n pi_2m.

    Equals P_t,1 * omega under power adaptation, where PER_1n = P_t,1.
    """
    w = _weights(scenario, variant)
    p1 = mode_probabilities(scenario.source_link, policy.source_thresholds)
    p2 = mode_probabilities(scenario.relay_link, policy.relay_thresholds)
    per1, _ = mode_avg_pers(scenario, policy)
    return float((per1 * p1) @ w @ p2)


def average_power(scenario: Scenario, policy: AdaptationPolicy, variant: str = DEFAULT_OMEGA) -> float:
    """Long-run average transmit power of source and relay combined.

    Convex combination of E[P_s] and E[P_r] with weights 1/(1 + P_t,1*Omega)
    and P_t,1*Omega/(1 + P_t,1*Omega).
    """
    load = relay_load(scenario, policy, variant)
    e_s = expected_source_power(scenario, policy)
    e_r = expected_relay_power(scenario, policy)
    return (e_s + load * e_r) / (1.0 + load)


def power_constraint_lhs(scenario: Scenario, policy: AdaptationPolicy, phi: float) -> float:
    """E[P_s] + phi * P_t,1 * E[P_r]; feasible when <= p_bar * (1 + phi * P_t,1)."""
    return expected_source_power(scenario, policy) + phi * policy.target_per_source * expected_relay_power(
        scenario, policy
    )


def enforce_increasing(levels, rel_step: float = 1e-12):
    """Nudge levels upward so they strictly increase.

    Returns the new levels and the 1-based modes left with an empty region.
    """
    out = np.array(levels, dtype=float)
    disabled = []
    for k in range(1, out.size):
        if out[k] <= out[k - 1]:
            out[k] = out[k - 1] * (1.0 + rel_step)
            disabled.append(k)  # region of mode k ([G_k, G_{k+1})) collapsed
    return out, tuple(disabled)


def build_power_policy(scenario: Scenario, p_t1: float, source_thresholds, relay_thresholds) -> AdaptationPolicy:
    """Channel-inversion policy for the split (p_t1, p_loss / p_t1)."""
    if not scenario.p_loss < p_t1 < 1.0:
        raise ValidationError(f"p_t1 must lie in ({scenario.p_loss}, 1), got {p_t1}")
    p_t2 = scenario.p_loss / p_t1
    s = check_thresholds(source_thresholds, "source thresholds")
    r = check_thresholds(relay_thresholds, "relay thresholds")
    for arr, table, label in ((s, scenario.table, "source"), (r, scenario.relay_table, "relay")):
        low = np.nonzero(arr < table.gamma_p * (1.0 - 1e-12))[0]
        if low.size:
            raise ValidationError(f"{label} level {low[0] + 1} is below gamma_p of mode {low[0] + 1}")
    return AdaptationPolicy(
        source_thresholds=s,
        relay_thresholds=r,
        source_gains=power_gains(scenario.table, p_t1),
        relay_gains=power_gains(scenario.relay_table, p_t2),
        target_per_source=p_t1,
        target_per_relay=p_t2,
        power_adaptive=True,
    )


def evaluate(scenario: Scenario, policy: AdaptationPolicy, variant: str = DEFAULT_OMEGA) -> PerformanceReport:
    p1 = mode_probabilities(scenario.source_link, policy.source_thresholds)
    p2 = mode_probabilities(scenario.relay_link, policy.relay_thresholds)
    per1, per2 = mode_avg_pers(scenario, policy)
    return PerformanceReport(
        spectral_efficiency=spectral_efficiency_from(scenario.source_rates, scenario.relay_rates, p1, p2, per1, per2),
        avg_power=average_power(scenario, policy, variant),
        source_mode_probabilities=p1,
        relay_mode_probabilities=p2,
        source_avg_pers=per1,
        relay_avg_pers=per2,
        omega=omega(scenario, policy.source_thresholds, policy.relay_thresholds),
        omega_appendix=omega_appendix(scenario, policy.source_thresholds, policy.relay_thresholds),
        omega_variant=variant,
    )
