"""Frame-level Monte Carlo of cooperative ARQ with AMC and optional power control.

One draw is one source frame under block fading. The source picks its mode
from the fresh S-D SNR (no transmission in outage); a failed packet is resent
by the relay in the next relay frame using a fresh R-D SNR. A relay outage
loses the packet. Packet outcomes are Bernoulli with the fitted PER evaluated
at the post-adaptation SNR.

Time is measured in source frames. A frame at mode n carries packets in
proportion to R_n, so resending them at relay mode m takes R_n / R_m source
frame durations (R_n / (alpha R_m) relay frames).

Estimates are batch means over ``n_batches`` independent batches. Batch ``b``
draws from a Philox stream keyed by ``(seed, b)``, so results do not depend
on how batches are spread over workers.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from .amc import power_gains
from .analytic import DEFAULT_OMEGA, OMEGA_VARIANTS, AdaptationPolicy, Scenario, evaluate, relay_load
from .errors import ValidationError

ESTIMATOR_MODES = ("per_packet", "ratio_totals")
FLAG_Z = 4.0

# per-batch sums, in this order
_FIELDS = (
    "frames",  # source frames drawn (outage included)
    "se_sum",  # per-frame efficiency values
    "bits",  # accepted bits per unit frame symbols
    "symbols",  # transmitted symbols per unit frame symbols
    "src_energy",  # sum of source power over frames
    "relay_energy",  # relay power times relay air-time
    "relay_time",  # relay air-time in source-frame units
    "relay_power_all",  # relay power a relay frame would use, summed over every draw
    "relay_ready",  # draws where the relay link is out of outage
    "sent",  # packets offered, weighted by R_n
    "first_ok",
    "recovered",
    "lost",
    "lost_outage",  # subset of lost: relay link in outage
    "sent_ready",  # packets offered while the relay link is out of outage
    "sent_frames",
    "relay_tx",  # relay retransmissions
)


@dataclass(frozen=True)
class SimConfig:
    packet_budget: int = 1_000_000
    seed: int = 0
    frame_symbols: int = 1080
    alpha: float = 0.5
    estimator_mode: str = "per_packet"
    n_batches: int = 100
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.packet_budget) < 1:
            raise ValidationError(f"packet_budget must be >= 1, got {self.packet_budget}")
        if int(self.frame_symbols) < 1:
            raise ValidationError(f"frame_symbols must be >= 1, got {self.frame_symbols}")
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.estimator_mode not in ESTIMATOR_MODES:
            raise ValidationError(f"estimator_mode must be one of {ESTIMATOR_MODES}")
        if not 2 <= int(self.n_batches) <= int(self.packet_budget):
            raise ValidationError("n_batches must lie in [2, packet_budget]")
        if int(self.n_jobs) < 1:
            raise ValidationError("n_jobs must be >= 1")


@dataclass
class Estimate:
    value: float
    stderr: float

    def z(self, target: float) -> float:
        if self.stderr > 0:
            return (self.value - target) / self.stderr
        return 0.0 if self.value == target else math.copysign(math.inf, self.value - target)


@dataclass
class SimEstimate:
    se_per_packet: Estimate
    se_ratio_totals: Estimate
    avg_power_ratio_totals: Estimate
    avg_power_factorized: Estimate
    realized_plr: Estimate
    realized_plr_with_outage: Estimate
    slot_ratio_J_over_I: Estimate
    counts: Dict[str, float]
    estimator_mode: str = "per_packet"
    batches: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def spectral_efficiency(self) -> Estimate:
        return self.se_per_packet if self.estimator_mode == "per_packet" else self.se_ratio_totals

    def batch_csv(self) -> str:
        """Per-batch sums as CSV, one row per batch."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("batch",) + _FIELDS)
        for b, row in enumerate(self.batches):
            w.writerow([b] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _mode_arrays(table, gains):
    # index 0 is the outage region; padded so fancy indexing needs no masking
    pad = lambda x: np.concatenate(([np.nan], np.asarray(x, float)))
    return pad(table.rates), pad(table.fit_a), pad(table.fit_g), pad(table.gamma_p), pad(gains)


def _per(a, g, gp, post, pre):
    fit = np.minimum(1.0, a * np.exp(-g * post))
    return np.where(pre < gp, 1.0, fit)


def _run_batch(args):
    scenario, policy, seed, batch, size, alpha = args
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, batch])))
    g1 = rng.exponential(scenario.source_link.mean_snr, size)
    u1 = rng.random(size)
    g2 = rng.exponential(scenario.relay_link.mean_snr, size)
    u2 = rng.random(size)

    rs, a1, k1, gp1, h1 = _mode_arrays(scenario.table, policy.source_gains)
    rr, a2, k2, gp2, h2 = _mode_arrays(scenario.relay_table, policy.relay_gains)
    n = np.searchsorted(policy.source_thresholds, g1, side="right")
    m = np.searchsorted(policy.relay_thresholds, g2, side="right")
    tx = n > 0
    ready = m > 0

    with np.errstate(invalid="ignore"):
        if policy.power_adaptive:
            p_src = np.where(tx, scenario.p_bar_s * h1[n] / g1, 0.0)
            post1 = h1[n]
            p_rel = np.where(ready, scenario.p_bar_r * h2[m] / g2, 0.0)
            post2 = h2[m]
        else:
            p_src = np.where(tx, scenario.p_bar_s, 0.0)
            post1 = g1
            p_rel = np.where(ready, scenario.p_bar_r, 0.0)
            post2 = g2
        fail1 = tx & (u1 < _per(a1[n], k1[n], gp1[n], post1, g1))
        relay = fail1 & ready
        ok2 = relay & (u2 >= _per(a2[m], k2[m], gp2[m], post2, g2))
        lost = fail1 & ~ok2
        r_n = np.where(tx, rs[n], 0.0)
        r_m = np.where(ready, rr[m], 1.0)
        air = np.where(relay, r_n / r_m, 0.0)  # relay air-time, source-frame units

        first_ok = tx & ~fail1
        se = np.where(first_ok, r_n, 0.0) + np.where(ok2, r_n * r_m / (r_n + r_m), 0.0)
        # per unit frame symbols: a frame at mode n carries R_n bits per symbol
        bits = np.where(first_ok | ok2, r_n, 0.0)
        symbols = tx.astype(float) + air

    return np.array(
        [
            size,
            se.sum(),
            bits.sum(),
            symbols.sum(),
            p_src.sum(),
            (p_rel * air).sum(),
            air.sum(),
            p_rel.sum(),
            ready.sum(),
            r_n.sum(),
            r_n[first_ok].sum(),
            r_n[ok2].sum(),
            r_n[lost].sum(),
            r_n[lost & ~ready].sum(),
            r_n[ready].sum(),
            tx.sum(),
            relay.sum(),
        ],
        dtype=float,
    )


def _batch_sizes(total: int, n_batches: int):
    base, extra = divmod(total, n_batches)
    return [base + (1 if b < extra else 0) for b in range(n_batches)]


def _mean_se(values) -> Estimate:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size < 2:
        return Estimate(float(v.mean()) if v.size else math.nan, math.nan)
    return Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)))


def _safe(num, den):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def simulate(scenario: Scenario, policy: AdaptationPolicy, config: Optional[SimConfig] = None) -> SimEstimate:
    """Run the simulation; estimates carry batch-means standard errors."""
    config = config or SimConfig()
    if len(policy.source_thresholds) != len(scenario.table) or len(policy.relay_thresholds) != len(
        scenario.relay_table
    ):
        raise ValidationError("policy does not match the scenario's mode tables")
    sizes = _batch_sizes(int(config.packet_budget), int(config.n_batches))
    jobs = [(scenario, policy, int(config.seed), b, s, config.alpha) for b, s in enumerate(sizes)]
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=int(config.n_jobs)) as pool:
            rows = list(pool.map(_run_batch, jobs))
    else:
        rows = [_run_batch(j) for j in jobs]
    B = np.vstack(rows)
    col = {name: B[:, i] for i, name in enumerate(_FIELDS)}
    frames = col["frames"]

    mean_ps = col["src_energy"] / frames
    mean_pr = col["relay_power_all"] / frames
    load = col["relay_time"] / frames  # alpha * J / I
    factorized = (mean_ps + load * mean_pr) / (1.0 + load)

    totals = B.sum(axis=0)
    counts = {name: float(totals[i]) for i, name in enumerate(_FIELDS)}
    counts["relay_frames"] = counts["relay_time"] / config.alpha
    counts["symbols_total"] = counts["symbols"] * config.frame_symbols
    counts["bits_total"] = counts["bits"] * config.frame_symbols
    return SimEstimate(
        se_per_packet=_mean_se(col["se_sum"] / frames),
        se_ratio_totals=_mean_se(_safe(col["bits"], col["symbols"])),
        avg_power_ratio_totals=_mean_se((col["src_energy"] + col["relay_energy"]) / (frames + col["relay_time"])),
        avg_power_factorized=_mean_se(factorized),
        realized_plr=_mean_se(_safe(col["lost"] - col["lost_outage"], col["sent_ready"])),
        realized_plr_with_outage=_mean_se(_safe(col["lost"], col["sent"])),
        slot_ratio_J_over_I=_mean_se(load / config.alpha),
        counts=counts,
        estimator_mode=config.estimator_mode,
        batches=B,
    )


def design_policy(scenario: Scenario, policy: AdaptationPolicy) -> AdaptationPolicy:
    """The policy with power gains rebuilt from its target PERs."""
    return policy.with_gains(
        power_gains(scenario.table, policy.target_per_source),
        power_gains(scenario.relay_table, policy.target_per_relay),
    )


def compare(
    scenario: Scenario,
    policy: AdaptationPolicy,
    config: Optional[SimConfig] = None,
    variant: str = DEFAULT_OMEGA,
    estimate: Optional[SimEstimate] = None,
) -> dict:
    """Analytic against simulated metrics; a metric is flagged beyond 4 standard errors.

    The analytic side is computed from the policy's target PERs, the simulator
    runs the stored gains, so inconsistent gains show up as flags.
    """
    config = config or SimConfig()
    est = estimate if estimate is not None else simulate(scenario, policy, config)
    design = design_policy(scenario, policy)
    rep = evaluate(scenario, design, variant)
    rep_app = evaluate(scenario, design, "appendixB")
    rows = {}

    def add(name, analytic, sim: Estimate, one_sided=False):
        z = sim.z(analytic)
        bad = z > FLAG_Z if one_sided else abs(z) > FLAG_Z
        rows[name] = {
            "analytic": analytic,
            "simulated": sim.value,
            "stderr": sim.stderr,
            "z": z,
            "flag": bool(bad or not math.isfinite(sim.value)),
        }

    add("spectral_efficiency", rep.spectral_efficiency, est.se_per_packet)
    add("avg_power", rep.avg_power, est.avg_power_ratio_totals)
    add("avg_power_factorized", rep_app.avg_power, est.avg_power_factorized)
    add("plr", scenario.p_loss, est.realized_plr, one_sided=True)
    for v in OMEGA_VARIANTS:
        add(f"slot_ratio_{v}", relay_load(scenario, design, v) / config.alpha, est.slot_ratio_J_over_I)
    return {
        "metrics": rows,
        "plr_with_outage": asdict(est.realized_plr_with_outage),
        "counts": est.counts,
        "omega_variant": variant,
        "any_flag": any(r["flag"] for k, r in rows.items() if k != "slot_ratio_prop2"),
        "slot_ratio_matches": [v for v in OMEGA_VARIANTS if not rows[f"slot_ratio_{v}"]["flag"]],
        "estimate": est,
    }


def format_compare(report: dict) -> str:
    """key=value lines, one per metric field."""
    lines = [f"omega_variant={report['omega_variant']}"]
    for name, row in report["metrics"].items():
        for k in ("analytic", "simulated", "stderr", "z", "flag"):
            lines.append(f"{name}.{k}={row[k]}")
    lines.append(f"plr_with_outage.simulated={report['plr_with_outage']['value']}")
    lines.append(f"plr_with_outage.stderr={report['plr_with_outage']['stderr']}")
    for k, v in report["counts"].items():
        lines.append(f"counts.{k}={v:.17g}")
    lines.append(f"slot_ratio_matches={','.join(report['slot_ratio_matches']) or 'none'}")
    lines.append(f"any_flag={report['any_flag']}")
    return "\n".join(lines) + "\n"
