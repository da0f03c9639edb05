"""Command-line entry points: constants | check | solve | sweep | verify.

Exit-code contract: 0 success, 2 config error, 3 smallness violation,
4 solver non-convergence, 5 invariant violation.  All reports are JSON (or
CSV for fields and sweep tables) with deterministic content for a fixed
config and seed; no timestamps, sorted keys.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import validate
from .config import Experiment, build_experiment, experiment_from_file
from .constants import (
    CriticalReport,
    check_smallness,
    compute_G,
    c_lambda_bound,
    delta1,
    phi_at_min,
    solve_delta0,
    z_delta,
    zeros_y,
)
from .errors import (
    BracketError,
    CertificateError,
    ConfigError,
    DeltaOutOfRange,
    DomainError,
    ExponentOutOfRange,
    FieldValidationError,
    IterativeSolveFailure,
    MaxOuterIterations,
    NewtonStall,
    NoTwoZeros,
    QuadgradError,
    SmallnessViolated,
    TransformOverflowError,
)
from .grid import ScalarField, write_field_csv
from .nonlinearity import transform_inverse
from .solver import (
    fixed_point_residual,
    k_continuation,
    norm_identity_gap,
    original_residual,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SMALLNESS = 3
EXIT_NONCONVERGENCE = 4
EXIT_INVARIANT = 5

_CONFIG_ERRORS = (ConfigError, FieldValidationError, CertificateError,
                  DomainError, ExponentOutOfRange, DeltaOutOfRange,
                  BracketError, TransformOverflowError, NewtonStall,
                  IterativeSolveFailure)


def _dump_json(payload, out_dir, name):
    text = json.dumps(payload, sort_keys=True, indent=2)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text + "\n")
    return text


def _partial_report(exp: Experiment, tol, y_deltas=()):
    """Constants report that degrades gracefully when smallness fails."""
    c = exp.problem_constants
    theta = c.theta
    G = compute_G(c, theta)
    a1, a3 = check_smallness(c, theta, G)
    report = CriticalReport(
        theta=theta, c_theta=c_lambda_bound(theta), G=G, delta1=delta1(c),
        delta0=None, Z_delta0=None, smallness_A1=a1, smallness_A3=a3,
        root_tol=tol, C_N=c.C_N, C_N_source=exp.C_N_source,
    )
    ok = a1.holds and a3.holds
    if ok:
        report.delta0, report.Z_delta0 = solve_delta0(c, theta, G, tol=tol)
        for d in y_deltas:
            try:
                report.y_zeros[float(d)] = zeros_y(d, c, theta, G, tol=tol)
            except (NoTwoZeros, DeltaOutOfRange):
                report.y_zeros[float(d)] = (math.nan, math.nan)
    return report, ok


def cmd_constants(args):
    exp = experiment_from_file(args.config, for_solve=False)
    if exp.problem_constants is None:
        raise ConfigError(f"constants not computable: {exp.constants_error}")
    tol = float(exp.raw.get("constants", {}).get("root_tol", 1e-12))
    report, ok = _partial_report(
        exp, tol, exp.raw.get("report", {}).get("y_deltas", ()))
    payload = {
        "report": report.to_dict(),
        "norms": exp.norms,
        "exponents": exp.exponents,
        "seed": exp.seed,
    }
    print(_dump_json(payload, args.out or exp.out_dir, "constants_report.json"))
    return EXIT_OK if ok else EXIT_SMALLNESS


def cmd_check(args):
    exp = experiment_from_file(args.config, for_solve=False)
    if exp.problem_constants is None:
        raise ConfigError(f"constants not computable: {exp.constants_error}")
    c = exp.problem_constants
    theta = c.theta
    G = compute_G(c, theta)
    a1, a3 = check_smallness(c, theta, G)
    payload = {
        "A1": {"holds": a1.holds, "margin": a1.margin},
        "A3": {"holds": a3.holds, "margin": a3.margin},
        "seed": exp.seed,
    }
    print(_dump_json(payload, args.out or exp.out_dir, "smallness.json"))
    return EXIT_OK if (a1.holds and a3.holds) else EXIT_SMALLNESS


def _write_trace(traces, out_dir):
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trace.jsonl"), "w") as fh:
        for trace in traces:
            for row in trace.records:
                payload = json.loads(row.to_json())
                payload["k"] = trace.k
                fh.write(json.dumps(payload, sort_keys=True) + "\n")


def _write_diagnostics(diag, out_dir):
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "tail_energy.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n"] + [repr(k) for k in diag.k_schedule])
        for nidx, n in enumerate(diag.n_ladder):
            writer.writerow([repr(float(n))]
                            + [repr(v) for v in diag.tail_energy[nidx]])
    with open(os.path.join(out_dir, "increments.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k_from", "k_to", "increment"])
        for (k1, k2), inc in zip(
                zip(diag.k_schedule, diag.k_schedule[1:]), diag.increments):
            writer.writerow([repr(k1), repr(k2), repr(inc)])


def cmd_solve(args):
    exp = experiment_from_file(args.config)
    out_dir = args.out or exp.out_dir
    data, cfg = exp.data, exp.solver_cfg
    try:
        w_star, diag, traces = k_continuation(data, cfg, n_ladder=exp.n_ladder)
    except MaxOuterIterations as exc:
        traces = list(getattr(exc, "partial_traces", []) or [])
        if exc.trace is not None:
            traces.append(exc.trace)
        _write_trace(traces, out_dir)
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    _write_trace(traces, out_dir)
    _write_diagnostics(diag, out_dir)
    u_vals = transform_inverse(w_star.values, cfg.delta)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_field_csv(w_star, os.path.join(out_dir, "solution_w.csv"))
        write_field_csv(ScalarField(exp.grid, u_vals),
                        os.path.join(out_dir, "solution_u.csv"))
    lhs, rhs, gap = norm_identity_gap(
        ScalarField(exp.grid, u_vals), cfg.delta, exact_chain=True)
    eps_solver = max(t.eps_solver for t in traces)
    ball_violation = any(
        rec.in_ball is False for t in traces for rec in t.records)
    slack_violation = any(
        rec.slack < -eps_solver for t in traces for rec in t.records)
    summary = {
        "delta": cfg.delta,
        "delta_mode": exp.delta_mode,
        "k_schedule": list(diag.k_schedule),
        "residual_truncated": diag.residuals,
        "residual_untruncated_final": fixed_point_residual(
            w_star, data, cfg.delta, k=None),
        "residual_original": original_residual(w_star, data, cfg.delta),
        "norm_identity": {"lhs": lhs, "rhs": rhs, "gap": gap},
        "grad_norm_w_final": traces[-1].records[-1].grad_norm_W,
        "ball_radius": data.ball_radius,
        "eps_solver": eps_solver,
        "ball_violation": ball_violation,
        "slack_violation": slack_violation,
        "max_abs_w": diag.max_abs,
        "seed": exp.seed,
    }
    print(_dump_json(summary, out_dir, "residuals.json"))
    if ball_violation or slack_violation:
        print("invariant violation recorded in trace", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_sweep(args):
    exp = experiment_from_file(args.config, for_solve=False)
    if exp.problem_constants is None:
        raise ConfigError(f"constants not computable: {exp.constants_error}")
    c = exp.problem_constants
    theta = c.theta
    G = compute_G(c, theta)
    out_dir = args.out or exp.out_dir
    rows = []
    if args.mode == "delta":
        a1, a3 = check_smallness(c, theta, G)
        d0 = None
        if a1.holds and a3.holds:
            d0, _ = solve_delta0(c, theta, G)
        lo, hi = c.gamma, delta1(c)
        for d in np.linspace(lo, hi, args.points):
            d = float(d)
            row = {"delta": d}
            try:
                row["Z_delta"] = float(z_delta(d, c, theta, G))
                row["phi_min"] = float(phi_at_min(d, c, theta, G))
                if d0 is not None and d < d0 and row["phi_min"] < 0:
                    try:
                        ym, yp = zeros_y(d, c, theta, G)
                        row["Y_minus"], row["Y_plus"] = float(ym), float(yp)
                    except NoTwoZeros:
                        pass
                row["status"] = "ok"
            except QuadgradError as exc:
                row["status"] = f"failed: {exc}"
            rows.append(row)
        fields = ["delta", "Z_delta", "phi_min", "Y_minus", "Y_plus", "status"]
    else:
        scales = np.array(args.scales, dtype=float)
        for sf in scales:
            for sa in scales:
                row = {"f_scale": float(sf), "a0_scale": float(sa)}
                try:
                    from .constants import ProblemConstants
                    cc = ProblemConstants(
                        N=c.N, alpha=c.alpha, gamma=c.gamma, c0=c.c0, q=c.q,
                        norm_f_N2=c.norm_f_N2 * sf, norm_f_Hm1=c.norm_f_Hm1 * sf,
                        norm_a0_N2=c.norm_a0_N2 * sa, norm_a0_q=c.norm_a0_q * sa,
                        C_N=c.C_N, sobolev_exponent=c.sobolev_exponent,
                        f_norm_exponent=c.f_norm_exponent)
                    th = cc.theta
                    Gs = compute_G(cc, th)
                    a1, a3 = check_smallness(cc, th, Gs)
                    row["A1_margin"], row["A3_margin"] = a1.margin, a3.margin
                    row["admissible"] = a1.holds and a3.holds
                    if row["admissible"]:
                        row["delta0"], _ = solve_delta0(cc, th, Gs)
                    row["status"] = "ok"
                except QuadgradError as exc:
                    row["status"] = f"failed: {exc}"
                rows.append(row)
        fields = ["f_scale", "a0_scale", "A1_margin", "A3_margin",
                  "admissible", "delta0", "status"]
    target = os.path.join(out_dir, "sweep.csv") if out_dir else None
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(
            "" if row.get(k) is None else
            (repr(row[k]) if isinstance(row.get(k), float) else str(row[k]))
            for k in fields))
    text = "\n".join(lines)
    if target:
        os.makedirs(out_dir, exist_ok=True)
        with open(target, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _equivalence_crosscheck(exp: Experiment):
    """Coarse two-resolution solve: the residual of the reconstructed original
    unknown must shrink under refinement (the two formulations agree in the
    limit)."""
    base_n = exp.raw["problem"]["grid"]["n"]
    sspec = exp.raw.get("solver", {})
    k_final = max(tuple(sspec.get("k_schedule", ())) or (sspec.get("k", 100.0),))
    residuals = []
    try:
        for scale in (4, 2):
            n_override = [max(8, int(n) // scale) for n in base_n]
            coarse = build_experiment(
                exp.raw, base_dir=exp.base_dir,
                overrides={"n": n_override,
                           "solver": {"rho": 0.5, "outer_tol": 1e-9,
                                      "max_outer": 500, "k_schedule": [],
                                      "k": k_final}},
            )
            w, _, _ = k_continuation(coarse.data, coarse.solver_cfg)
            residuals.append(
                original_residual(w, coarse.data, coarse.solver_cfg.delta))
    except SmallnessViolated as exc:
        # inadmissible data is a verdict, not an invariant violation; the
        # check command reports it with its own exit code
        return validate.CheckResult(
            "equivalence cross-check", True, math.nan, f"skipped: {exc}")
    except (MaxOuterIterations, QuadgradError) as exc:
        return validate.CheckResult(
            "equivalence cross-check", False, math.nan, f"solve failed: {exc}")
    ok = residuals[1] < residuals[0]
    return validate.CheckResult(
        "equivalence cross-check", ok, residuals[1],
        f"original-form residual {residuals[0]:.3e} -> {residuals[1]:.3e} "
        "under refinement",
    )


def cmd_verify(args):
    results = []
    try:
        exp = experiment_from_file(args.config, for_solve=False)
    except (FieldValidationError, CertificateError) as exc:
        results.append(validate.CheckResult(
            "field invariants", False, math.nan, str(exc)))
        for res in results:
            print(res.line())
        return EXIT_INVARIANT
    rng = np.random.default_rng(args.seed if args.seed is not None else exp.seed)
    data = exp.data
    model, gamma, c0 = data.model, data.gamma, data.c0

    results.append(validate.check_certificate(model, gamma, c0, rng,
                                              alpha_min=data.alpha))
    if model.vanishes_at_zero_s:
        results.append(validate.check_h_vanishes_at_zero_gradient(model, rng))
    results.append(validate.check_k_two_sided(model, gamma, c0, rng))
    results.append(validate.check_k_nonnegative(model, gamma, c0, rng))
    results.append(validate.check_g_identity(rng))
    results.append(validate.check_g_envelope(rng))
    results.append(validate.check_operator_symmetry(data.op, rng))
    results.append(validate.check_integration_by_parts(data.A, rng))
    p_star = exp.exponents["sobolev"]
    p_f = exp.exponents["f_norm"]
    results.append(validate.check_holder(exp.grid, (p_f, p_star, p_star), rng))
    results.append(validate.check_sobolev_holds(exp.grid, p_star, data.C_N, rng))
    results.append(validate.check_dual_norm(exp.grid, rng))
    if exp.problem_constants is not None:
        c = exp.problem_constants
        theta = c.theta
        G = compute_G(c, theta)
        results.append(validate.check_g_growth(G, theta, delta1(c), rng))
        results.extend(validate.constants_cross_checks(c, rng))
        results.append(_equivalence_crosscheck(exp))

    for res in results:
        print(res.line())
    payload = [{"name": r.name, "ok": r.ok, "worst": r.worst, "detail": r.detail}
               for r in results]
    _dump_json({"checks": payload, "seed": exp.seed},
               args.out or exp.out_dir, "verify_report.json")
    return EXIT_OK if all(r.ok for r in results) else EXIT_INVARIANT


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quadgrad",
        description="critical constants, smallness checks, and fixed-point "
                    "solves for quasilinear problems with quadratic gradient "
                    "growth",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("constants", cmd_constants), ("check", cmd_check),
                     ("solve", cmd_solve), ("sweep", cmd_sweep),
                     ("verify", cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(fn=fn)
        if name == "sweep":
            p.add_argument("--mode", choices=("delta", "scales"),
                           default="delta")
            p.add_argument("--points", type=int, default=41)
            p.add_argument("--scales", type=float, nargs="+",
                           default=[0.25, 0.5, 1.0, 2.0, 4.0])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SmallnessViolated as exc:
        print(f"smallness violation: {exc}", file=sys.stderr)
        return EXIT_SMALLNESS
    except MaxOuterIterations as exc:
        print(f"solver non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def console_main():
    sys.exit(main())
