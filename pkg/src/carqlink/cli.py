"""Command-line entry point: ``carqlink <verb> [options]``.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 infeasible,
5 numerical failure, 1 any other package error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .amc import check_table, linear_to_db, load_mode_table
from .analytic import OMEGA_VARIANTS
from .config import load_scenario, load_sweep
from .errors import CarqError, ValidationError
from .optimizer import audit_quasiconcavity
from .reports import run_scenario, run_sweep, solve, with_overrides
from .simulator import compare, format_compare


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_optimize(args):
    text, _, _ = run_scenario(args.scenario, args.packets, args.seed, args.omega_variant)
    _emit(text, args.out)
    return 0


def cmd_sweep(args):
    sweep = load_sweep(args.sweep)
    if args.omega_variant:
        base = replace(
            sweep.base,
            omega_variant=args.omega_variant,
            optimizer=replace(sweep.base.optimizer, omega_variant=args.omega_variant),
        )
        sweep = replace(sweep, base=base)
    if args.jobs:
        sweep.n_jobs = args.jobs
    _emit(run_sweep(sweep), args.out)
    return 0


def cmd_simulate(args):
    spec = load_scenario(args.scenario)
    spec = with_overrides(spec, args.packets or 10**6, args.seed, args.omega_variant)
    policy, _, _ = solve(spec)
    if policy is None:
        raise ValidationError("direct transmission has no cooperative policy to simulate")
    report = compare(spec.scenario, policy, spec.simulate, spec.omega_variant)
    _emit(format_compare(report), args.out)
    if args.batch_csv:
        Path(args.batch_csv).write_text(report["estimate"].batch_csv())
    return 0


def cmd_audit(args):
    spec = load_scenario(args.scenario)
    if args.omega_variant:
        spec = replace(spec, optimizer=replace(spec.optimizer, omega_variant=args.omega_variant))
    res = audit_quasiconcavity(spec.scenario, spec.optimizer, num=args.num)
    lines = [f"local_maxima={res['local_maxima']}", f"argmax_p_t1={res['argmax']:.6g}", "p_t1,eta"]
    lines += [f"{p!r},{e!r}" for p, e in zip(res["p_t1"], res["eta"])]
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if res["local_maxima"] == 1 else 1


def cmd_check_table(args):
    table = load_mode_table(args.table)
    res = check_table(table, args.p_loss)
    bad = res["targets"][~res["ok"]]
    lines = [f"modes={len(table)}", f"packet_bits={table.packet_bits}"]
    for m, seam in zip(table, res["seams"]):
        lines.append(
            f"mode.{m.index}=rate:{m.rate} a:{m.fit_a} g:{m.fit_g} "
            f"gamma_p_db:{float(linear_to_db(m.fit_gamma_p)):.4f} seam:{seam:.5f}"
        )
    lines.append(f"ordered_slopes_all_targets={res['all_ok']}")
    if bad.size:
        lines.append(f"ordered_slopes_fail_targets={np.min(bad):.4g}..{np.max(bad):.4g} ({bad.size}/{res['ok'].size})")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carqlink", description="Cooperative ARQ link adaptation tools")
    p.add_argument("-v", "--verbose", action="store_true", help="log optimizer warnings")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--omega-variant", choices=OMEGA_VARIANTS, help="relay-load weighting")

    sp = sub.add_parser("optimize", help="optimize one scenario")
    common(sp)
    sp.add_argument("--packets", type=lambda s: int(float(s)), help="append a simulation cross-check")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="run a sweep file, write CSV")
    sp.add_argument("--sweep", required=True)
    sp.add_argument("--jobs", type=int, help="worker processes")
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="optimize, then compare against Monte Carlo")
    common(sp)
    sp.add_argument("--packets", type=lambda s: int(float(s)))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--batch-csv", help="write per-batch sums here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("audit-quasiconcavity", help="scan eta over the source target PER")
    common(sp)
    sp.add_argument("--num", type=int, default=50)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("check-table", help="validate a mode table")
    sp.add_argument("--table", default="default")
    sp.add_argument("--p-loss", type=float, default=1e-3)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_check_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CarqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
