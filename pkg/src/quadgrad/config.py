"""Experiment configuration: JSON schema, field assembly, norm recomputation.

A config is one JSON document with four blocks:

  problem   -- grid geometry, coefficient matrix, sources f and a0 (CSV path
               or expression-catalog entry), nonlinearity model, and the
               scalar constants (alpha, gamma, c0, q, N);
  constants -- provenance of the Sobolev constant: "estimate" for the grid
               estimator or "literature:<value>" for a user-supplied number;
  solver    -- fixed-point knobs, delta either "delta0" or an explicit value;
  report    -- output ladder heights and optional sweep parameters.

Norms entering the constants engine are always recomputed from the discrete
fields; declared values in the config are advisory and merely cross-checked
(1% tolerance), which keeps the estimate chain internally consistent.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .constants import (
    CriticalReport,
    ProblemConstants,
    check_smallness,
    compute_G,
    critical_report,
    solve_delta0,
    zeros_y,
)
from .errors import (
    ConfigError,
    DomainError,
    ExponentOutOfRange,
    FieldValidationError,
    NoTwoZeros,
)
from .grid import (
    Grid,
    MatrixField,
    ScalarField,
    estimate_sobolev_constant,
    field_from_expression,
    hminus1_norm,
    lp_norm,
    read_field_csv,
)
from .nonlinearity import HModel
from .solver import SolveData, SolverConfig

DEFAULT_SEED = 20240901


@dataclass
class Experiment:
    """Fully assembled experiment: data, solver knobs, optional constants."""

    raw: dict
    base_dir: str
    seed: int
    grid: Grid
    data: SolveData
    solver_cfg: SolverConfig | None
    problem_constants: ProblemConstants | None
    report: CriticalReport | None
    delta_mode: str
    n_ladder: tuple
    out_dir: str | None
    constants_error: str | None = None
    norms: dict | None = None
    exponents: dict | None = None
    C_N_source: str = "estimate"


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _require(block: dict, key, context):
    if key not in block:
        raise ConfigError(f"missing key {key!r} in {context} block")
    return block[key]


def _resolve_path(base_dir, path):
    full = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(full):
        raise ConfigError(f"referenced file does not exist: {full}")
    return full


def _build_scalar_field(spec, grid, base_dir, name) -> ScalarField:
    if not isinstance(spec, dict):
        raise ConfigError(f"{name} must be an object with 'csv' or 'expr'")
    if "csv" in spec:
        return read_field_csv(_resolve_path(base_dir, spec["csv"]), grid)
    if "expr" in spec:
        return field_from_expression(grid, spec["expr"])
    raise ConfigError(f"{name} needs either a 'csv' path or an 'expr' entry")


def _build_matrix_field(spec, grid, alpha) -> MatrixField:
    kind = spec.get("kind", "identity")
    try:
        if kind == "identity":
            return MatrixField(grid, float(spec.get("scale", 1.0)) * np.eye(grid.dim),
                               alpha=alpha)
        if kind == "constant":
            return MatrixField(grid, np.array(spec["matrix"], dtype=float),
                               alpha=alpha)
        if kind == "diagonal":
            entries = [float(v) for v in spec["entries"]]
            if len(entries) != grid.dim:
                raise ConfigError(
                    f"diagonal coefficient needs {grid.dim} entries, got {len(entries)}"
                )
            return MatrixField(grid, np.diag(entries), alpha=alpha)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed coefficient matrix spec: {exc}") from exc
    raise ConfigError(f"unknown coefficient matrix kind {kind!r}")


def _build_model(spec, grid, base_dir, gamma, c0, alpha,
                 enforce_certificate=True) -> HModel:
    kind = _require(spec, "kind", "problem.H")
    try:
        if kind == "zero":
            model = HModel(kind="zero", gamma_cert=gamma, c0_cert=c0)
        elif kind == "shape_times_quadratic":
            model = HModel(
                kind=kind, coeff=float(_require(spec, "coeff", "problem.H")),
                shape=spec.get("shape", "tanh"), gamma_cert=gamma, c0_cert=c0,
            )
        elif kind == "mu_gradsq":
            mu_spec = _require(spec, "mu", "problem.H")
            if isinstance(mu_spec, dict):
                mu = _build_scalar_field(mu_spec, grid, base_dir, "H.mu").values
            else:
                mu = float(mu_spec)
            model = HModel(kind=kind, mu=mu, gamma_cert=gamma, c0_cert=c0)
        else:
            raise ConfigError(f"unknown nonlinearity kind {kind!r}")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"malformed nonlinearity spec: {exc}") from exc
    if enforce_certificate and not model.analytic_certificate_ok(alpha):
        raise ConfigError(
            "nonlinearity parameters violate the declared growth certificate "
            f"(gamma={gamma:g}, c0={c0:g}, alpha={alpha:g})"
        )
    return model


def _check_declared_norms(declared: dict, computed: dict):
    for key, value in declared.items():
        if key not in computed:
            raise ConfigError(f"declared norm {key!r} is not a known norm")
        ref = computed[key]
        if abs(float(value) - ref) > 0.01 * max(abs(ref), 1e-300):
            raise ConfigError(
                f"declared norm {key} = {value:g} deviates more than 1% from "
                f"the field-derived value {ref:g}"
            )


def build_experiment(cfg: dict, base_dir: str = ".",
                     overrides: dict | None = None,
                     for_solve: bool = True) -> Experiment:
    """Assemble and validate an experiment from a config dict.

    `overrides` may replace the grid resolution ({"n": [..]}) and solver knobs
    without editing the document, which the refinement studies rely on.  With
    ``for_solve=False`` the substitution parameter is not resolved, so
    constants-only commands can inspect configs whose smallness conditions
    fail.
    """
    if overrides:
        cfg = json.loads(json.dumps(cfg))
        if "n" in overrides:
            cfg["problem"]["grid"]["n"] = overrides["n"]
        for key, val in overrides.get("solver", {}).items():
            cfg.setdefault("solver", {})[key] = val
    problem = _require(cfg, "problem", "top-level")
    gspec = _require(problem, "grid", "problem")
    try:
        grid = Grid(tuple(_require(gspec, "extents", "problem.grid")),
                    tuple(_require(gspec, "n", "problem.grid")))
    except FieldValidationError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc

    alpha = float(_require(problem, "alpha", "problem"))
    gamma = float(_require(problem, "gamma", "problem"))
    c0 = float(_require(problem, "c0", "problem"))
    q = float(_require(problem, "q", "problem"))
    N = int(_require(problem, "N", "problem"))

    A = _build_matrix_field(_require(problem, "A", "problem"), grid, alpha)
    f = _build_scalar_field(_require(problem, "f", "problem"), grid, base_dir, "f")
    a0 = _build_scalar_field(_require(problem, "a0", "problem"), grid, base_dir, "a0")
    if np.any(a0.values < 0):
        raise ConfigError("a0 must be nonnegative")
    model = _build_model(_require(problem, "H", "problem"), grid, base_dir,
                         gamma, c0, alpha, enforce_certificate=for_solve)

    pair = problem.get("exponent_pair", {})
    sobolev_exp = pair.get("sobolev")
    f_exp = pair.get("f_norm")
    if N >= 3:
        if sobolev_exp is None:
            sobolev_exp = 2.0 * N / (N - 2)
        if f_exp is None:
            f_exp = N / 2.0
    elif sobolev_exp is None or f_exp is None:
        raise ConfigError(
            "N < 3 requires problem.exponent_pair with 'sobolev' and 'f_norm'"
        )
    sobolev_exp, f_exp = float(sobolev_exp), float(f_exp)

    norms = {
        "f_N2": lp_norm(f, f_exp),
        "f_Hm1": hminus1_norm(f),
        "a0_N2": lp_norm(a0, f_exp),
        "a0_q": lp_norm(a0, q),
    }
    declared = cfg.get("constants", {}).get("declared_norms", {})
    _check_declared_norms(declared, norms)

    cn_spec = str(cfg.get("constants", {}).get("C_N", "estimate"))
    if cn_spec == "estimate":
        est = estimate_sobolev_constant(grid, sobolev_exp)
        C_N = est.value
        cn_source = "estimate"
    elif cn_spec.startswith("literature:"):
        try:
            C_N = float(cn_spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"malformed C_N spec {cn_spec!r}") from exc
        cn_source = cn_spec
    else:
        raise ConfigError(
            f"constants.C_N must be 'estimate' or 'literature:<value>', got {cn_spec!r}"
        )

    constants = None
    report = None
    constants_error = None
    try:
        constants = ProblemConstants(
            N=N, alpha=alpha, gamma=gamma, c0=c0, q=q,
            norm_f_N2=norms["f_N2"], norm_f_Hm1=norms["f_Hm1"],
            norm_a0_N2=norms["a0_N2"], norm_a0_q=norms["a0_q"], C_N=C_N,
            sobolev_exponent=sobolev_exp, f_norm_exponent=f_exp,
        )
    except (DomainError, ExponentOutOfRange) as exc:
        constants_error = exc

    theta = G = 0.0
    if constants is not None:
        theta = constants.theta
        G = compute_G(constants, theta)

    sspec = cfg.get("solver", {})
    delta_spec = sspec.get("delta", "delta0")
    ball_radius = None
    if not for_solve:
        delta_mode = "none"
        delta = None
    elif delta_spec == "delta0":
        if constants is None:
            raise ConfigError(
                f"solver.delta = 'delta0' needs admissible constants: {constants_error}"
            )
        delta_mode = "delta0"
        d0, zd0 = solve_delta0(constants, theta, G)
        delta = d0
        ball_radius = zd0
        report = critical_report(
            constants, C_N_source=cn_source,
            y_deltas=cfg.get("report", {}).get("y_deltas", ()),
        )
    else:
        delta = float(delta_spec)
        delta_mode = "explicit"
        if delta < gamma:
            raise DomainError(
                f"solver.delta = {delta:g} lies below gamma = {gamma:g}"
            )
        if constants is not None:
            a1, a3 = check_smallness(constants, theta, G)
            if a1.holds and a3.holds:
                report = critical_report(constants, C_N_source=cn_source)
                if delta < report.delta0:
                    try:
                        y_minus, _ = zeros_y(delta, constants, theta, G)
                        ball_radius = y_minus
                    except NoTwoZeros:
                        ball_radius = report.Z_delta0
                elif delta == report.delta0:
                    ball_radius = report.Z_delta0

    solver_cfg = None
    if for_solve:
        solver_cfg = SolverConfig(
            delta=delta,
            k=float(sspec.get("k", 100.0)),
            rho=float(sspec.get("rho", 0.5)),
            outer_tol=float(sspec.get("outer_tol", 1e-9)),
            inner_tol=float(sspec.get("inner_tol", 1e-11)),
            cg_tol=float(sspec.get("cg_tol", 1e-12)),
            max_outer=int(sspec.get("max_outer", 200)),
            max_inner=int(sspec.get("max_inner", 40)),
            k_schedule=tuple(sspec.get("k_schedule", ())),
        )

    data = SolveData(
        grid=grid, A=A, f=f, a0=a0, model=model, alpha=alpha, gamma=gamma,
        c0=c0, norm_f_N2=norms["f_N2"], norm_f_Hm1=norms["f_Hm1"],
        norm_a0_N2=norms["a0_N2"], norm_a0_q=norms["a0_q"], C_N=C_N,
        theta=theta, G=G, ball_radius=ball_radius,
    )

    return Experiment(
        raw=cfg, base_dir=base_dir, seed=int(cfg.get("seed", DEFAULT_SEED)),
        grid=grid, data=data, solver_cfg=solver_cfg,
        problem_constants=constants, report=report, delta_mode=delta_mode,
        n_ladder=tuple(cfg.get("report", {}).get("n_ladder", ())),
        out_dir=cfg.get("report", {}).get("out_dir"),
        constants_error=str(constants_error) if constants_error else None,
        norms=norms,
        exponents={"sobolev": sobolev_exp, "f_norm": f_exp, "q": q, "N": N},
        C_N_source=cn_source,
    )


def experiment_from_file(path, overrides: dict | None = None,
                         for_solve: bool = True) -> Experiment:
    cfg = load_config(path)
    return build_experiment(cfg, base_dir=os.path.dirname(os.path.abspath(path)),
                            overrides=overrides, for_solve=for_solve)
