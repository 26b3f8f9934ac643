"""Joint switching-level and power adaptation under PLR and average-power limits.

For a fixed source target PER the KKT conditions give every switching level
in closed form as a function of the other link's levels and the power
multiplier. ``iterate`` runs the resulting fixed point; ``optimize`` wraps it
in a golden-section search over the source target PER.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .amc import db_to_linear, gain_slopes, linear_to_db
from .analytic import (
    DEFAULT_OMEGA,
    AdaptationPolicy,
    PerformanceReport,
    Scenario,
    build_power_policy,
    enforce_increasing,
    evaluate,
    mode_probabilities,
    omega_value,
    power_constraint_lhs,
    spectral_efficiency,
)
from .errors import InfeasibleError, NumericalError, ValidationError

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("floors", "random", "user")
UPDATE_ORDERS = ("source_first", "jacobi")
PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizerConfig:
    max_iterations: int = 50
    se_convergence_tol: float = 1e-4
    lambda_bracket: Tuple[float, float] = (0.0, 1.0)
    lambda_cap: float = 2.0**60
    lambda_tol: float = 1e-10
    pt1_search_tol: float = 1e-4
    pt1_interval: Optional[Tuple[float, float]] = None
    initial_thresholds: str = "floors"
    user_thresholds: Optional[Tuple[Sequence[float], Sequence[float]]] = None
    random_db_range: Tuple[float, float] = (5.0, 30.0)
    seed: Optional[int] = None
    omega_variant: str = DEFAULT_OMEGA
    # "source_first": relay levels react to the source levels of the same round;
    # "jacobi": both links react to the previous round only.
    update_order: str = "source_first"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        for name in ("se_convergence_tol", "lambda_tol", "pt1_search_tol", "lambda_cap"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        lo, hi = self.lambda_bracket
        if not 0 <= lo < hi:
            raise ValidationError(f"lambda_bracket must satisfy 0 <= lo < hi, got {self.lambda_bracket}")
        if self.initial_thresholds not in INIT_STRATEGIES:
            raise ValidationError(f"initial_thresholds must be one of {INIT_STRATEGIES}")
        if self.initial_thresholds == "user" and self.user_thresholds is None:
            raise ValidationError("initial_thresholds='user' needs user_thresholds")
        if self.update_order not in UPDATE_ORDERS:
            raise ValidationError(f"update_order must be one of {UPDATE_ORDERS}")


@dataclass
class IterationRecord:
    iteration: int
    lam: float
    source_thresholds: np.ndarray
    relay_thresholds: np.ndarray
    phi: float
    eta: float


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    converged_at: Optional[int] = None

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.records])

    def monotone_after_first(self, slack: float) -> bool:
        """True when eta never drops by more than ``slack`` after iteration 1."""
        e = self.etas[1:]
        return bool(np.all(np.diff(e) >= -slack)) if e.size > 1 else True


# -- closed-form levels -------------------------------------------------------


def _prev_rates(rates):
    return np.concatenate(([0.0], rates[:-1]))


def _mixing(own_rates, other_rates, other_probs) -> np.ndarray:
    """Sum_m R_m^2 / ((R_m + R_{n-1})(R_m + R_n)) pi_m for every n (R_0 = 0)."""
    r = np.asarray(own_rates, dtype=float)[:, None]
    rp = _prev_rates(np.asarray(own_rates, dtype=float))[:, None]
    o = np.asarray(other_rates, dtype=float)[None, :]
    return (o**2 / ((o + rp) * (o + r))) @ other_probs


def source_levels(scenario: Scenario, p_t1: float, relay_thresholds, lam: float):
    """Source switching levels for multiplier ``lam`` given the relay levels.

    Returns ``(levels, disabled_modes)``; each level is floored at gamma_p.
    """
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    table = scenario.table
    p2 = mode_probabilities(scenario.relay_link, relay_thresholds)
    den = (1.0 - p_t1) + (p_t1 - scenario.p_loss) * _mixing(table.rates, scenario.relay_rates, p2)
    bad = np.nonzero(den <= 0)[0]
    if bad.size:
        raise NumericalError(f"source level {bad[0] + 1}: nonpositive denominator {den[bad[0]]}")
    raw = lam * scenario.p_bar_s * gain_slopes(table, p_t1) / den
    return enforce_increasing(np.maximum(raw, table.gamma_p))


def relay_levels(scenario: Scenario, p_t1: float, source_thresholds, lam: float, phi: float):
    """Relay switching levels for ``lam`` and frozen omega ``phi`` given source levels."""
    if lam < 0 or phi < 0:
        raise ValidationError(f"lambda and phi must be >= 0, got {lam}, {phi}")
    table = scenario.relay_table
    p_t2 = scenario.p_loss / p_t1
    scale = lam * phi * scenario.p_bar_r
    if scale == 0.0:
        return enforce_increasing(table.gamma_p.copy())
    p1 = mode_probabilities(scenario.source_link, source_thresholds)
    den = (1.0 - scenario.p_loss / p_t1) * _mixing(table.rates, scenario.source_rates, p1)
    bad = np.nonzero(den <= 0)[0]
    if bad.size:
        raise NumericalError(f"relay level {bad[0] + 1}: nonpositive denominator {den[bad[0]]}")
    raw = scale * gain_slopes(table, p_t2) / den
    return enforce_increasing(np.maximum(raw, table.gamma_p))


def _policy(scenario, p_t1, s, r) -> AdaptationPolicy:
    pol = build_power_policy(scenario, p_t1, s[0], r[0])
    return AdaptationPolicy(
        pol.source_thresholds,
        pol.relay_thresholds,
        pol.source_gains,
        pol.relay_gains,
        pol.target_per_source,
        pol.target_per_relay,
        True,
        s[1],
        r[1],
    )


def consumed_power(
    scenario: Scenario, p_t1: float, prev, phi: float, lam: float, order: str = "source_first"
) -> Tuple[float, tuple, tuple]:
    """Power-constraint left-hand side after updating both links at ``lam``."""
    s = source_levels(scenario, p_t1, prev[1], lam)
    r = relay_levels(scenario, p_t1, s[0] if order == "source_first" else prev[0], lam, phi)
    pol = _policy(scenario, p_t1, s, r)
    return power_constraint_lhs(scenario, pol, phi), s, r


def solve_lambda(scenario: Scenario, p_t1: float, prev_thresholds, phi: float, config: Optional[OptimizerConfig] = None):
    """Find the multiplier that spends the average-power budget exactly.

    Source levels are recomputed at trial multipliers against the relay
    levels in ``prev_thresholds``; relay levels follow ``config.update_order``. The bracket starts at
    ``config.lambda_bracket`` and its upper end doubles until consumption
    falls below budget. Bisection then stops on the feasible side once the
    relative residual is below ``lambda_tol``.

    Returns ``(lam, (source_levels, disabled), (relay_levels, disabled))``.
    """
    config = config or OptimizerConfig()
    if phi < 0:
        raise ValidationError(f"phi must be >= 0, got {phi}")
    budget = scenario.p_bar * (1.0 + phi * p_t1)
    lo, hi = config.lambda_bracket

    def excess(lam):
        lhs, s, r = consumed_power(scenario, p_t1, prev_thresholds, phi, lam, config.update_order)
        return lhs - budget, s, r

    f_lo, s_lo, r_lo = excess(lo)
    if f_lo <= 0:
        if lo == 0.0:
            return 0.0, s_lo, r_lo
        lo = 0.0
        f_lo, s_lo, r_lo = excess(0.0)
        if f_lo <= 0:
            return 0.0, s_lo, r_lo
    f_hi, s_hi, r_hi = excess(hi)
    while f_hi > 0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        if hi > config.lambda_cap:
            raise InfeasibleError(
                f"average-power constraint C1 unmet for every lambda <= {config.lambda_cap:g} "
                f"(consumption {f_hi + budget:.6g} vs budget {budget:.6g})"
            )
        f_hi, s_hi, r_hi = excess(hi)
    for _ in range(200):
        if abs(f_hi) <= config.lambda_tol * budget or (hi - lo) <= 1e-15 * hi:
            break
        mid = 0.5 * (lo + hi)
        f_mid, s_mid, r_mid = excess(mid)
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi, s_hi, r_hi = mid, f_mid, s_mid, r_mid
    return hi, s_hi, r_hi


# -- fixed-point iteration ---------------------------------------------------


def initial_thresholds(scenario: Scenario, config: OptimizerConfig, rng=None):
    """Starting levels for both links per ``config.initial_thresholds``."""
    gp_s, gp_r = scenario.table.gamma_p, scenario.relay_table.gamma_p
    if config.initial_thresholds == "floors":
        return enforce_increasing(gp_s)[0], enforce_increasing(gp_r)[0]
    if config.initial_thresholds == "user":
        s, r = config.user_thresholds
        return (
            enforce_increasing(np.maximum(np.asarray(s, float), gp_s))[0],
            enforce_increasing(np.maximum(np.asarray(r, float), gp_r))[0],
        )
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    lo, hi = config.random_db_range
    out = []
    for gp in (gp_s, gp_r):
        draw = np.sort(db_to_linear(rng.uniform(lo, hi, gp.size)))
        out.append(enforce_increasing(np.maximum(draw, gp))[0])
    return tuple(out)


def iterate(
    scenario: Scenario,
    p_t1: float,
    config: Optional[OptimizerConfig] = None,
    init=None,
    rng=None,
) -> Tuple[AdaptationPolicy, IterationTrace]:
    """Fixed-point iteration over (lambda, source levels, relay levels) at fixed ``p_t1``.

    Each round freezes phi at omega of the previous levels and solves for the
    multiplier while updating both links (order set by ``config.update_order``).
    The record at iteration 0 holds the starting point.
    """
    config = config or OptimizerConfig()
    if not scenario.p_loss < p_t1 < 1.0:
        raise ValidationError(f"p_t1 must lie in ({scenario.p_loss}, 1), got {p_t1}")
    if init is None:
        init = initial_thresholds(scenario, config, rng)
    s_levels, r_levels = (np.asarray(x, float) for x in init)
    s_dis = r_dis = ()
    trace = IterationTrace()
    pol = _policy(scenario, p_t1, (s_levels, ()), (r_levels, ()))
    eta = spectral_efficiency(scenario, pol)
    trace.records.append(IterationRecord(0, float("nan"), s_levels, r_levels, float("nan"), eta))
    for i in range(1, config.max_iterations + 1):
        phi = omega_value(scenario, s_levels, r_levels, config.omega_variant)
        lam, s_new, r_new = solve_lambda(scenario, p_t1, (s_levels, r_levels), phi, config)
        s_levels, s_dis = s_new
        r_levels, r_dis = r_new
        pol = _policy(scenario, p_t1, s_new, r_new)
        eta_new = spectral_efficiency(scenario, pol)
        trace.records.append(IterationRecord(i, lam, s_levels, r_levels, phi, eta_new))
        if abs(eta_new - eta) < config.se_convergence_tol:
            trace.converged = True
            trace.converged_at = i
            break
        eta = eta_new
    if not trace.converged:
        log.warning("iteration did not converge in %d steps at p_t1=%g", config.max_iterations, p_t1)
    if not trace.monotone_after_first(config.se_convergence_tol):
        log.warning("spectral efficiency decreased between iterations at p_t1=%g: %s", p_t1, np.round(trace.etas[:6], 5))
    return pol, trace


def eta_of_pt1(scenario: Scenario, config: Optional[OptimizerConfig] = None) -> Callable[[float], float]:
    """eta(p_t1) after convergence; infeasible points map to -inf."""
    config = config or OptimizerConfig()

    def f(p_t1):
        try:
            return spectral_efficiency(scenario, iterate(scenario, p_t1, config)[0])
        except InfeasibleError:
            return -math.inf

    return f


# -- outer search ------------------------------------------------------------


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200):
    """Maximise a unimodal ``f`` on [lo, hi]; returns (x, f(x), evaluations).

    Evaluations are cached, so the endpoints are compared at the end too.
    """
    cache = {}

    def F(x):
        if x not in cache:
            cache[x] = f(x)
        return cache[x]

    a, b = lo, hi
    x1 = b - PHI * (b - a)
    x2 = a + PHI * (b - a)
    f1, f2 = F(x1), F(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - PHI * (b - a)
            f1 = F(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + PHI * (b - a)
            f2 = F(x2)
    for x in (lo, hi, 0.5 * (a + b)):
        F(x)
    x_best = max(cache, key=cache.get)
    return x_best, cache[x_best], cache


def default_pt1_interval(scenario: Scenario, config: OptimizerConfig):
    if config.pt1_interval is not None:
        return config.pt1_interval
    return scenario.p_loss * 1.0001, 0.9999


def optimize(scenario: Scenario, config: Optional[OptimizerConfig] = None):
    """Maximise spectral efficiency over the source target PER.

    Returns ``(policy, p_t1_star, report)``; ``report.extras`` carries the
    iteration trace at the optimum and the number of outer evaluations.
    """
    config = config or OptimizerConfig()
    lo, hi = default_pt1_interval(scenario, config)
    x, fx, cache = golden_section_max(eta_of_pt1(scenario, config), lo, hi, config.pt1_search_tol)
    if not math.isfinite(fx):
        raise InfeasibleError("average-power constraint C1 cannot be met for any p_t1 in the search interval")
    policy, trace = iterate(scenario, x, config)
    report = evaluate(scenario, policy, config.omega_variant)
    report.extras.update(
        {
            "p_t1_star": x,
            "p_t2_star": scenario.p_loss / x,
            "iterations": len(trace.records) - 1,
            "converged": trace.converged,
            "outer_evaluations": len(cache),
            "trace": trace,
        }
    )
    return policy, x, report


def audit_quasiconcavity(scenario: Scenario, config: Optional[OptimizerConfig] = None, num: int = 50, tol: float = 1e-6):
    """Sample eta(p_t1) on a log grid in (p_loss, 1) and count local maxima.

    Differences within ``tol`` count as flat; a maximum at either end of the
    grid counts as well. Quasiconcavity implies exactly one.
    """
    config = config or OptimizerConfig()
    grid = np.logspace(math.log10(scenario.p_loss * 1.0001), math.log10(0.9999), num)
    f = eta_of_pt1(scenario, config)
    etas = np.array([f(p) for p in grid])
    n_max = count_local_maxima(etas, tol)
    if n_max != 1:
        log.warning("quasiconcavity audit: %d local maxima of eta(p_t1)", n_max)
    return {"p_t1": grid, "eta": etas, "local_maxima": n_max, "argmax": float(grid[int(np.argmax(etas))])}


def count_local_maxima(values, tol: float = 1e-6) -> int:
    d = np.diff(np.asarray(values, dtype=float))
    signs = np.sign(d[np.abs(d) > tol])
    if signs.size == 0:
        return 1
    peaks = int(np.sum((signs[:-1] > 0) & (signs[1:] < 0)))
    peaks += int(signs[0] < 0) + int(signs[-1] > 0)
    return peaks


def describe_levels(levels) -> str:
    return ", ".join(f"{v:.3f}" for v in linear_to_db(levels))
