"""Scenario runs and parameter sweeps producing key=value text and CSV."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional

from .amc import linear_to_db
from .analytic import Scenario, evaluate
from .config import ScenarioSpec, SweepSpec, load_scenario
from .constpower import const_power_policy, direct_transmission_report, optimize_const_power
from .errors import CarqError, InfeasibleError
from .optimizer import describe_levels, iterate, optimize
from .simulator import SimConfig, compare, format_compare

CSV_COLUMNS = ("variable", "value", "scheme", "eta", "p_avg", "p_t1_star", "feasibility")
SIM_COLUMNS = ("sim_eta", "sim_eta_stderr", "sim_p_avg", "sim_p_avg_stderr")


def solve(spec: ScenarioSpec, scheme: Optional[str] = None):
    """Design a policy for ``scheme``; returns (policy or None, p_t1, report)."""
    scheme = scheme or spec.scheme
    sc = spec.scenario
    if scheme == "adaptive-power-carq":
        return optimize(sc, spec.optimizer)
    if scheme == "const-power-carq":
        return optimize_const_power(sc, spec.optimizer.pt1_search_tol, spec.omega_variant)
    return None, sc.p_loss, direct_transmission_report(sc)


def run_scenario(source, packets: Optional[int] = None, seed: Optional[int] = None, omega_variant=None):
    """Optimize the scenario in ``source`` and optionally cross-check by simulation.

    Returns ``(text, report, compare_report_or_None)``.
    """
    spec = source if isinstance(source, ScenarioSpec) else load_scenario(source)
    spec = with_overrides(spec, packets, seed, omega_variant)
    policy, p_t1, report = solve(spec)
    lines = [
        f"scenario={spec.source}",
        f"scheme={spec.scheme}",
        f"omega_variant={spec.omega_variant}",
        f"eta={report.spectral_efficiency:.6f}",
        f"p_avg={report.avg_power:.6f}",
        f"p_avg_db={float(linear_to_db(report.avg_power)):.4f}",
        f"p_t1_star={p_t1:.6g}",
        f"p_t2_star={spec.scenario.p_loss / p_t1:.6g}",
    ]
    if policy is not None:
        lines += [
            f"source_levels_db={describe_levels(policy.source_thresholds)}",
            f"relay_levels_db={describe_levels(policy.relay_thresholds)}",
            f"omega_prop2={report.omega:.6f}",
            f"omega_appendixB={report.omega_appendix:.6f}",
        ]
    for key in ("iterations", "converged", "outer_evaluations"):
        if key in report.extras:
            lines.append(f"{key}={report.extras[key]}")
    text = "\n".join(lines) + "\n"
    cmp_report = None
    if spec.simulate is not None and policy is not None:
        cmp_report = compare(spec.scenario, policy, spec.simulate, spec.omega_variant)
        text += format_compare(cmp_report)
    return text, report, cmp_report


def with_overrides(spec: ScenarioSpec, packets, seed, omega_variant) -> ScenarioSpec:
    if omega_variant is not None:
        spec = replace(spec, omega_variant=omega_variant, optimizer=replace(spec.optimizer, omega_variant=omega_variant))
    if packets is not None or seed is not None:
        sim = spec.simulate or SimConfig(alpha=spec.scenario.alpha)
        if packets is not None:
            sim = replace(sim, packet_budget=int(packets))
        if seed is not None:
            sim = replace(sim, seed=int(seed))
        spec = replace(spec, simulate=sim)
    return spec


def _point_spec(sweep: SweepSpec, value: float) -> ScenarioSpec:
    base = sweep.base
    sc = base.scenario
    if sweep.variable == "p_t1":
        return base
    p_bar_db = float(linear_to_db(sc.p_bar))
    kw = dict(p_bar_db=p_bar_db, mu_db=sc.mu_db)
    kw[sweep.variable] = value
    # explicit per-link powers and SNR means would pin the swept quantity, so they follow the sweep
    new = Scenario.from_db(
        p_loss=sc.p_loss, alpha=sc.alpha, table=sc.table, relay_table=sc.relay_table, **kw
    )
    return replace(base, scenario=new)


def _sweep_point(args):
    sweep, value, scheme = args
    spec = _point_spec(sweep, value)
    row = {"variable": sweep.variable, "value": value, "scheme": scheme}
    try:
        if sweep.variable == "p_t1":
            policy, report = _fixed_pt1(spec, scheme, value)
            p_t1 = value
        else:
            policy, p_t1, report = solve(spec, scheme)
        row.update(eta=report.spectral_efficiency, p_avg=report.avg_power, p_t1_star=p_t1, feasibility="ok")
        if sweep.simulate is not None:
            if policy is None:
                row.update({k: "" for k in SIM_COLUMNS})
            else:
                est = compare(spec.scenario, policy, sweep.simulate, spec.omega_variant)["estimate"]
                row.update(
                    sim_eta=est.se_per_packet.value,
                    sim_eta_stderr=est.se_per_packet.stderr,
                    sim_p_avg=est.avg_power_ratio_totals.value,
                    sim_p_avg_stderr=est.avg_power_ratio_totals.stderr,
                )
    except InfeasibleError as exc:
        row.update(eta="", p_avg="", p_t1_star="", feasibility=f"infeasible: {exc}")
    except CarqError as exc:
        row.update(eta="", p_avg="", p_t1_star="", feasibility=f"error: {type(exc).__name__}: {exc}")
    return row


def _fixed_pt1(spec: ScenarioSpec, scheme: str, p_t1: float):
    sc = spec.scenario
    if scheme == "adaptive-power-carq":
        policy, _ = iterate(sc, p_t1, spec.optimizer)
    elif scheme == "const-power-carq":
        policy = const_power_policy(sc, p_t1)
    else:
        return None, direct_transmission_report(sc)
    return policy, evaluate(sc, policy, spec.omega_variant)


def run_sweep(sweep: SweepSpec) -> str:
    """CSV text, one row per grid point and scheme, in grid order."""
    jobs = [(sweep, v, s) for v in sweep.grid for s in sweep.schemes]
    if sweep.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=sweep.n_jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    columns = CSV_COLUMNS + (SIM_COLUMNS if sweep.simulate is not None else ())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v
