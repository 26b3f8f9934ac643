"""Statistics of the pre-adaptation SNR on one Rayleigh block-fading link.

The SNR on each link is exponential with mean ``mean_snr``. Everything here
is a pure function of immutable inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .amc import AmcMode
from .errors import DivergenceError, ValidationError

EULER_GAMMA = 0.57721566490153286061
SERIES_CUTOFF = 1.0
QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class LinkModel:
    """Exponential SNR law; ``label`` is ``"source"`` (S-D) or ``"relay"`` (R-D)."""

    mean_snr: float
    label: str = "source"

    def __post_init__(self):
        if not (self.mean_snr > 0 and math.isfinite(self.mean_snr)):
            raise ValidationError(f"{self.label} link: mean_snr must be positive and finite, got {self.mean_snr}")

    def pdf(self, snr):
        snr = np.asarray(snr, dtype=float)
        return np.where(snr < 0, 0.0, np.exp(-snr / self.mean_snr) / self.mean_snr)

    def sf(self, snr):
        """P(SNR >= snr); 0 at infinity."""
        snr = np.asarray(snr, dtype=float)
        return np.exp(-np.maximum(snr, 0.0) / self.mean_snr)

    def sample(self, rng, size):
        return rng.exponential(self.mean_snr, size)


def check_thresholds(levels, name="thresholds") -> np.ndarray:
    """Validate a vector of switching levels: finite, positive, strictly increasing."""
    arr = np.array(levels, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError(f"{name}: need at least one level")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: levels must be finite")
    if arr[0] <= 0:
        raise ValidationError(f"{name}: first level must be > 0, got {arr[0]}")
    bad = np.nonzero(np.diff(arr) <= 0)[0]
    if bad.size:
        k = int(bad[0]) + 2
        raise ValidationError(f"{name}: level {k} ({arr[k - 1]}) does not exceed level {k - 1} ({arr[k - 2]})")
    return arr


def region_edges(levels) -> np.ndarray:
    """Edges [0, G_1, ..., G_N, inf] of the N + 1 regions (region 0 is outage)."""
    return np.concatenate(([0.0], np.asarray(levels, dtype=float), [np.inf]))


def mode_probability(link: LinkModel, thresholds, n: int) -> float:
    """Probability that the link selects mode ``n`` (``n = 0`` is outage)."""
    edges = region_edges(thresholds)
    if not 0 <= n <= edges.size - 2:
        raise IndexError(f"mode index {n} outside 0..{edges.size - 2}")
    return float(link.sf(edges[n]) - link.sf(edges[n + 1]))


def mode_probabilities(link: LinkModel, thresholds, include_outage: bool = False) -> np.ndarray:
    sf = link.sf(region_edges(thresholds))
    p = sf[:-1] - sf[1:]
    return p if include_outage else p[1:]


# -- exponential integral ---------------------------------------------------


def exp1_series(x: float) -> float:
    """E1 by its power series; accurate for 0 < x <= ~2."""
    total = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -x / k
        step = term / k
        total += step
        if abs(step) < 1e-17 * max(abs(total), 1e-300):
            break
    return -EULER_GAMMA - math.log(x) - total


def scaled_exp1_cf(x: float) -> float:
    """exp(x) * E1(x) by modified Lentz continued fraction; for x >= ~1."""
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def exp1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0."""
    if x <= 0:
        raise DivergenceError(f"E1 diverges at x = {x}")
    if math.isinf(x):
        return 0.0
    if x <= SERIES_CUTOFF:
        return exp1_series(x)
    return math.exp(-x) * scaled_exp1_cf(x)


def _exp1_pair(x: float):
    """(mantissa, exponent) with E1(x) = mantissa * exp(-exponent); avoids underflow."""
    if math.isinf(x):
        return 0.0, math.inf
    if x <= SERIES_CUTOFF:
        return exp1_series(x), 0.0
    return scaled_exp1_cf(x), x


def exp1_difference(a: float, b: float) -> float:
    """E1(a) - E1(b) for 0 < a <= b <= inf, free of cancellation and underflow."""
    if a <= 0:
        raise DivergenceError(f"integral of exp(-t)/t from {a} diverges")
    if b <= a:
        return 0.0
    ma, ea = _exp1_pair(a)
    mb, eb = _exp1_pair(b)
    # both terms rescaled by exp(a): E1(a) - E1(b) = exp(-a) * (big - small)
    big = ma * math.exp(a - ea)
    small = mb * math.exp(a - eb)
    inner = big - small
    if inner < 1e-6 * big:
        # narrow interval: int_0^{b-a} exp(-s)/(a+s) ds by Gauss-Legendre, no cancellation
        w = b - a
        s = 0.5 * w * (_GL_NODES + 1.0)
        inner = 0.5 * w * float(np.sum(_GL_WEIGHTS * np.exp(-s) / (a + s)))
    return math.exp(-a) * inner


def expected_inverse_snr(link: LinkModel, lower: float, upper: float) -> float:
    """Integral of (1/snr) * pdf(snr) over [lower, upper).

    This is the average of P/P_bar per unit gain under channel inversion and
    equals (E1(lower/mean) - E1(upper/mean)) / mean.
    """
    if lower <= 0:
        raise DivergenceError(f"{link.label} link: integral of 1/snr from {lower} diverges; levels must be > 0")
    if upper < lower:
        raise ValidationError(f"upper {upper} < lower {lower}")
    g = link.mean_snr
    return exp1_difference(lower / g, upper / g) / g


def expected_inverse_snr_quad(link: LinkModel, lower: float, upper: float) -> float:
    """Same integral by adaptive quadrature (independent route)."""
    if lower <= 0:
        raise DivergenceError(f"{link.label} link: integral of 1/snr from {lower} diverges")
    if upper <= lower:
        return 0.0
    g = link.mean_snr
    a, b = lower / g, upper / g
    # integrate exp(-(t - a))/t and restore exp(-a) afterwards so tiny tails keep relative accuracy
    # beyond a + 745 the rescaled integrand is below the smallest double; cutting there keeps
    # the adaptive rule from missing the mass packed against the left end of a huge interval
    f = lambda t: math.exp(-(t - a)) / t
    val, _ = integrate.quad(f, a, min(b, a + 745.0), epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return math.exp(-a) * val / g


def region_inverse_snr(link: LinkModel, thresholds) -> np.ndarray:
    """expected_inverse_snr over each mode region [G_n, G_{n+1}), n = 1..N."""
    edges = region_edges(thresholds)
    return np.array([expected_inverse_snr(link, edges[k], edges[k + 1]) for k in range(1, edges.size - 1)])


# -- average PER under constant power ---------------------------------------


def _fit_mass(link: LinkModel, mode: AmcMode, lo: float, hi: float) -> float:
    """int_lo^hi a*exp(-g s) pdf(s) ds."""
    if hi <= lo:
        return 0.0
    k = mode.fit_g + 1.0 / link.mean_snr
    upper = 0.0 if math.isinf(hi) else math.exp(-k * (hi - lo))
    return mode.fit_a / link.mean_snr * math.exp(-k * lo) * (1.0 - upper) / k


def per_mass_constant_power(link: LinkModel, mode: AmcMode, lower: float, upper: float) -> float:
    """int PER(snr) pdf(snr) over [lower, upper) when post-SNR equals pre-SNR."""
    # below max(gamma_p, ln(a)/g) the PER is exactly 1 (clamp region)
    knee = max(mode.fit_gamma_p, math.log(mode.fit_a) / mode.fit_g)
    knee = min(max(knee, lower), upper)
    clamp = float(link.sf(lower) - link.sf(knee))
    return clamp + _fit_mass(link, mode, knee, upper)


def avg_per_constant_power(link: LinkModel, thresholds, mode: AmcMode) -> float:
    """Mean PER of ``mode`` conditioned on the SNR lying in that mode's region.

    ``mode.index`` selects the region [G_n, G_{n+1}). An empty region returns
    the PER at its left edge.
    """
    edges = region_edges(thresholds)
    n = mode.index
    lo, hi = edges[n], edges[n + 1]
    pi = float(link.sf(lo) - link.sf(hi))
    if pi <= 0:
        return per_at(mode, lo)
    return min(1.0, max(0.0, per_mass_constant_power(link, mode, lo, hi) / pi))


def per_at(mode: AmcMode, snr: float) -> float:
    if math.isinf(snr):
        return 0.0
    if snr < mode.fit_gamma_p:
        return 1.0
    return min(1.0, mode.fit_a * math.exp(-mode.fit_g * snr))


def avg_pers_constant_power(link: LinkModel, thresholds, table) -> np.ndarray:
    return np.array([avg_per_constant_power(link, thresholds, m) for m in table])
