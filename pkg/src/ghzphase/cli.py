"""Command-line entry point.

Every subcommand writes CSV (with a ``# key=value`` header) to stdout, or
JSON with ``--json``. Exit status: 0 success, 2 invalid or infeasible parameters
(including unreadable input files), 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from .baseb import base_study, best_base
from .constrained import (
    HybridPlanParams,
    LossModel,
    hybrid_mse_bound,
    hybrid_plan,
    kappa_ratio,
    lossy_comparison,
    lossy_mse_bound,
    lossy_plan,
    lossy_ramp,
    optimal_cut,
    optimal_cut_integer,
    qfi_cut,
    qfi_optimal_state_bound,
)
from .core import BoundConstants, InfeasibleError, SchedulePlan, steps_for_cap, total_probes
from .errorprob import calibrate
from .harness import (
    FIGURES,
    CampaignSpec,
    Table,
    default_theta_grid,
    describe_version,
    emit_figure_data,
    run_campaign,
    table_to_json,
    write_csv,
)
from .planner import (
    RampParams,
    mse_bound_ramp,
    mse_bound_raw,
    mse_bound_vs_n,
    optimize_prefactor,
    piecewise_bound,
    prefactor_bound,
    qfi,
    qfi_inverse_piecewise,
    qfi_inverse_vs_n,
    ramp,
    resource_bounds,
    target_ramp,
)

EXIT_OK, EXIT_INTERNAL, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INFEASIBLE, f"{self.prog}: error: {message}\n")


def _constants(args) -> BoundConstants:
    if getattr(args, "constants", None):
        doc = json.loads(Path(args.constants).read_text())
        return BoundConstants.from_dict(doc.get("constants", doc))
    return BoundConstants.numeric()


def _const_meta(c: BoundConstants) -> dict:
    return {"A": c.a_const, "C": c.c_const, "gamma": c.gamma}


def _emit(args, table: Table, out) -> None:
    if args.json:
        doc = table_to_json(table)
        doc["meta"]["version"] = describe_version()
        json.dump(doc, out, indent=2)
        out.write("\n")
    else:
        write_csv(out, table.columns, table.rows, table.meta)


def _plan_table(plan: SchedulePlan, meta: dict) -> Table:
    rows = [[j + 1, s.m, s.nu0, s.nuplus] for j, s in enumerate(plan.steps)]
    return Table(["j", "m", "nu0", "nuplus"], rows, meta)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_calibrate(args, out):
    res = calibrate(args.nu_max, args.angles, math.pi / args.threshold_div)
    ref = BoundConstants.numeric()
    rows = []
    for nu, w in enumerate(res.worst_probs, start=1):
        rows.append([nu, w, ref.a_const * ref.c_const ** -nu, float(res.bound(nu))])
    meta = {"nu_max": args.nu_max, "angles": args.angles, "threshold_div": args.threshold_div,
            "fit_A": res.fitted.a_const, "fit_C": res.fitted.c_const, "fit_gamma": res.fitted.gamma}
    if args.json:
        doc = {"constants": res.fitted.to_dict(), "version": describe_version(),
               "rows": [dict(zip(["nu", "worst_prob", "bound_reference", "bound_fitted"], r)) for r in rows]}
        json.dump(doc, out, indent=2, default=lambda v: None)
        out.write("\n")
        return
    write_csv(out, ["nu", "worst_prob", "bound_reference", "bound_fitted"], rows, meta)


def cmd_plan(args, out):
    c = _constants(args)
    if args.target_n is not None:
        plan, red = target_ramp(args.k, args.target_n, c)
        meta = {"k": args.k, "target_n": args.target_n, "delta_n": red.delta_n}
    else:
        params = RampParams(args.k, args.xk, c)
        plan = ramp(params)
        meta = {"k": args.k, "x_k": args.xk, "mse_bound_closed": mse_bound_ramp(params)}
    meta.update(_const_meta(c))
    meta.update({"n_total": total_probes(plan), "mse_bound_raw": mse_bound_raw(plan, c)})
    if args.json:
        json.dump(plan.to_dict(), out, indent=2)
        out.write("\n")
    else:
        t = _plan_table(plan, meta)
        write_csv(out, t.columns, t.rows, t.meta)


def cmd_bound(args, out):
    c = _constants(args)
    params = RampParams(args.k, args.xk, c)
    if args.vs_n:
        n0, n1, steps = args.vs_n.split(":")
        n = np.geomspace(float(n0), float(n1), int(steps))
        rows = []
        with np.errstate(invalid="ignore"):
            pw = piecewise_bound(n, c)
            qpw = qfi_inverse_piecewise(n, c)
            qk = qfi_inverse_vs_n(n, args.k, c.gamma)
        for i, v in enumerate(n):
            try:
                b = mse_bound_vs_n(float(v), args.k, c)
            except InfeasibleError:
                b = float("nan")
            rows.append([float(v), b, float(qk[i]), float(pw[i]), float(qpw[i])])
        table = Table(["n", "mse_bound", "qfi_inverse_bound", "mse_bound_piecewise", "qfi_inverse_piecewise"],
                      rows, {"k": args.k, **_const_meta(c)})
    else:
        plan = ramp(params)
        rb = resource_bounds(params)
        row = [args.k, args.xk, rb.exact, rb.n_lower, rb.n_upper, mse_bound_raw(plan, c),
               mse_bound_ramp(params), prefactor_bound(args.xk, c), 1.0 / qfi(plan)]
        table = Table(["k", "x_k", "n_total", "n_lower", "n_upper", "mse_bound_raw", "mse_bound_closed",
                       "prefactor_bound", "qfi_inverse"], [row], _const_meta(c))
    _emit(args, table, out)


def cmd_prefactor(args, out):
    c = _constants(args)
    xs = np.arange(args.lo, args.hi + 1)
    vals = prefactor_bound(xs, c)
    best, val = optimize_prefactor(c, args.lo, args.hi)
    rows = [[int(x), float(v), math.sqrt(v) / math.pi] for x, v in zip(xs, vals)]
    meta = {"argmin": best, "min": val, **_const_meta(c)}
    _emit(args, Table(["x_k", "prefactor", "prefactor_over_pi"], rows, meta), out)


def cmd_simulate(args, out):
    c = _constants(args)
    plan = SchedulePlan.from_json(Path(args.plan).read_text())
    loss = LossModel(args.eta) if args.eta is not None else None
    grid = default_theta_grid(plan.k_steps, args.uniform_angles, args.adversarial_angles)
    spec = CampaignSpec(plan, tuple(grid), args.trials, args.seed, args.backend, loss, c,
                        workers=args.workers)
    s = run_campaign(spec)
    row = [s.trials, s.n_total, s.empirical_mse, s.empirical_rmse, s.normalized_mse, s.bound_raw,
           ";".join(str(v) for v in s.per_step_first_failure)]
    meta = {"seed": args.seed, "backend": args.backend, "eta": args.eta if args.eta is not None else "none",
            "theta_grid": f"{args.uniform_angles} uniform + {args.adversarial_angles} adversarial",
            **_const_meta(c)}
    _emit(args, Table(["runs", "n_total", "empirical_mse", "empirical_rmse", "mse_times_n2", "bound_raw",
                       "first_failure_hist"], [row], meta), out)


def cmd_sweep(args, out):
    c = _constants(args)
    params = {}
    if args.figure == "fig5":
        params = {"k_steps": args.k if args.k is not None else 15}
    elif args.figure == "fig6":
        params = {"n0": args.n0, "n1": args.n1, "points": args.points}
    elif args.figure == "fig7":
        params = {"k_steps": args.k if args.k is not None else 10, "x_km1": args.xkm1}
    elif args.figure in ("fig8", "fig9"):
        params = {"k_steps": args.k if args.k is not None else 10, "x_k": args.xk if args.xk is not None else 10.0,
                  "eta": args.eta}
    elif args.figure == "fig10":
        params = {"b_max": args.b_max}
    table = emit_figure_data(args.figure, c, **params)
    table.meta = {"figure": args.figure, **table.meta, **_const_meta(c)}
    _emit(args, table, out)


def cmd_limited_plan(args, out):
    c = _constants(args)
    loss = LossModel(args.eta) if args.eta is not None else None
    if args.cap is not None:
        k = steps_for_cap(args.cap)
        if args.k is not None and args.k != k:
            raise InfeasibleError(f"cap {args.cap} requires K={k}")
    elif args.k is None:
        raise InfeasibleError("give --k or --cap")
    else:
        k = args.k
    params = HybridPlanParams(k, args.xkm1, c, args.cap, loss)
    plan = hybrid_plan(params)
    meta = {"k": k, "x_km1": args.xkm1, "cap": args.cap if args.cap is not None else "none",
            "eta": args.eta if args.eta is not None else "none", "kappa": params.kappa,
            "n_total": total_probes(plan), "mse_bound": hybrid_mse_bound(params), **_const_meta(c)}
    if args.json:
        json.dump({"plan": plan.to_dict(), "mse_bound": meta["mse_bound"], "n_total": meta["n_total"],
                   "kappa": params.kappa}, out, indent=2)
        out.write("\n")
    else:
        t = _plan_table(plan, meta)
        write_csv(out, t.columns, t.rows, t.meta)


def cmd_noise_plan(args, out):
    c = _constants(args)
    loss = LossModel(args.eta)
    x, xp = lossy_ramp(args.k, args.xk, loss, c)
    plan = lossy_plan(args.k, args.xk, loss, c)
    cmp_ = lossy_comparison(args.k, args.xk, loss, c)
    rows = [[j + 1, 2 ** j, float(x[j]), float(xp[j]), plan.steps[j].nu0, float(cmp_.x_ideal[j]),
             float(cmp_.delta_states[j]), float(cmp_.delta_probes[j])] for j in range(args.k)]
    meta = {"k": args.k, "x_k": args.xk, "eta": args.eta, "n_total": total_probes(plan),
            "x_k_ideal_same_n": cmp_.x_k_ideal, "mse_bound": lossy_mse_bound(plan, loss, c), **_const_meta(c)}
    _emit(args, Table(["j", "m", "x", "x_prime", "nu", "x_ideal", "delta_states", "delta_probes"], rows, meta), out)


def cmd_loss_qfi(args, out):
    etas = np.linspace(args.eta_min, args.eta_max, args.points)
    rows = []
    for e in etas:
        loss = LossModel(float(e))
        r = optimal_cut(loss)
        rows.append([float(e), r, optimal_cut_integer(loss), qfi_cut(args.n, r, loss),
                     qfi_optimal_state_bound(args.n, loss), kappa_ratio(loss), math.sqrt(kappa_ratio(loss))])
    _emit(args, Table(["eta", "r_opt", "r_int", "qfi_cut", "qfi_bound", "kappa", "sqrt_kappa"], rows,
                      {"n": args.n}), out)


def cmd_base_study(args, out):
    rows = base_study(args.b_max)
    b = best_base(rows)
    table = Table(["b", "n", "c", "gamma", "x_k_opt", "prefactor", "prefactor_over_pi"],
                  [[r.base, r.shrink, r.c_analytic, r.gamma_b, r.x_k_opt, r.prefactor, r.prefactor_over_pi]
                   for r in rows], {"best_b": b.base, "A": 4.0})
    _emit(args, table, out)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ghzphase", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
        sp.set_defaults(func=func)
        return sp

    def consts(sp):
        sp.add_argument("--constants", metavar="FILE",
                        help="JSON bound constants (e.g. from `calibrate --json`)")

    sp = add("calibrate", cmd_calibrate, "exact worst-case failure probabilities and (A, C) fit")
    sp.add_argument("--nu-max", type=int, default=80)
    sp.add_argument("--angles", type=int, default=100)
    sp.add_argument("--threshold-div", type=int, default=3)

    sp = add("plan", cmd_plan, "linear-ramp plan")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--xk", type=float, default=11.0)
    sp.add_argument("--target-n", type=int)
    consts(sp)

    sp = add("bound", cmd_bound, "MSE bounds of a ramp, or against N")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--xk", type=float, default=11.0)
    sp.add_argument("--vs-n", metavar="N0:N1:STEPS", help="geometric N grid")
    consts(sp)

    sp = add("prefactor", cmd_prefactor, "scan of the MSE*N^2 bound over x_K")
    sp.add_argument("--lo", type=int, default=1)
    sp.add_argument("--hi", type=int, default=200)
    consts(sp)

    sp = add("simulate", cmd_simulate, "Monte Carlo campaign of a plan")
    sp.add_argument("--plan", required=True, metavar="PLAN_JSON")
    sp.add_argument("--trials", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--backend", choices=["collective", "parity"], default="collective")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--uniform-angles", type=int, default=24)
    sp.add_argument("--adversarial-angles", type=int, default=8)
    consts(sp)

    sp = add("sweep", cmd_sweep, "data behind a figure")
    sp.add_argument("--figure", choices=FIGURES, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--xk", type=float)
    sp.add_argument("--xkm1", type=float, default=30.0)
    sp.add_argument("--eta", type=float, default=0.998)
    sp.add_argument("--n0", type=float, default=1e2)
    sp.add_argument("--n1", type=float, default=1e7)
    sp.add_argument("--points", type=int, default=400)
    sp.add_argument("--b-max", type=int, default=10)
    consts(sp)

    sp = add("limited-plan", cmd_limited_plan, "hybrid plan under an entanglement cap")
    sp.add_argument("--k", type=int)
    sp.add_argument("--xkm1", type=float, required=True)
    sp.add_argument("--cap", type=int)
    sp.add_argument("--eta", type=float)
    consts(sp)

    sp = add("noise-plan", cmd_noise_plan, "lossy ramp and its matched loss-free comparison")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--xk", type=float, required=True)
    sp.add_argument("--eta", type=float, required=True)
    consts(sp)

    sp = add("loss-qfi", cmd_loss_qfi, "optimal GHZ bunch size and QFI ratio against eta")
    sp.add_argument("--eta-min", type=float, default=0.5)
    sp.add_argument("--eta-max", type=float, default=0.999)
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--n", type=float, default=1e4, help="total probes for the QFI columns")

    sp = add("base-study", cmd_base_study, "prefactor bound minimum for bases 2..b_max")
    sp.add_argument("--b-max", type=int, default=10)
    return p


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args, out)
    except (InfeasibleError, ValueError) as exc:
        print(f"ghzphase: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"ghzphase: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
