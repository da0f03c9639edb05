import json

import numpy as np
import pytest

from conftest import load_benchmark
from quadgrad.config import build_experiment
from quadgrad.errors import DomainError, MaxOuterIterations, NewtonStall
from quadgrad.grid import Grid, ScalarField, h1_seminorm
from quadgrad.nonlinearity import sign_k, truncate
from quadgrad.solver import (
    SolverConfig,
    estimate_check,
    fixed_point_residual,
    inner_solve,
    k_continuation,
    norm_identity_gap,
    original_residual,
    outer_fixed_point,
    transformed_rhs,
    zeroth_order_coefficient,
)


def make_exp(n=64, f_amp=1.0, a0_value=0.2, model=None, delta="delta0",
             dim=1, **solver_kw):
    problem = {
        "grid": {"extents": [1.0] * dim, "n": [n] * dim},
        "A": {"kind": "identity"},
        "f": {"expr": {"kind": "sine_bump", "amplitude": f_amp}}
        if f_amp else {"expr": {"kind": "constant", "value": 0.0}},
        "a0": {"expr": {"kind": "constant", "value": a0_value}},
        "H": model or {"kind": "shape_times_quadratic", "shape": "tanh",
                       "coeff": 0.4},
        "alpha": 1.0, "gamma": 0.5, "c0": 0.2, "q": 1.8, "N": 3,
    }
    solver = {"delta": delta, "k": 200.0, "rho": 0.5, "outer_tol": 1e-10,
              "inner_tol": 1e-12, "max_outer": 300}
    solver.update(solver_kw)
    return build_experiment({"problem": problem,
                             "constants": {"C_N": "estimate"},
                             "solver": solver})


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            SolverConfig(delta=0.5, rho=0.0)
        with pytest.raises(DomainError):
            SolverConfig(delta=0.5, rho=1.2)
        with pytest.raises(DomainError):
            SolverConfig(delta=-0.1)
        with pytest.raises(DomainError):
            SolverConfig(delta=0.5, k=0.0)


class TestInnerSolve:
    def test_poisson_oracle(self):
        # zero iterate, no nonlinearity, no zeroth-order data: plain Poisson
        exp = make_exp(n=128, f_amp=0.0, a0_value=0.0,
                       model={"kind": "zero"}, delta=0.5)
        grid = exp.grid
        data = exp.data
        data = data.__class__(**{**data.__dict__,
                                 "f": ScalarField(grid, np.ones(grid.shape)),
                                 "op": None, "_node_A": None})
        w0 = ScalarField.zeros(grid)
        W, info = inner_solve(w0, data, exp.solver_cfg)
        xs = grid.coords()[0]
        assert np.max(np.abs(W.values - xs * (1 - xs) / 2)) <= 1e-10
        assert info.residual <= 1e-12 * info.rhs_l2 * 1.01

    def test_zero_data_zero_solution(self):
        exp = make_exp(f_amp=0.0, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5)
        W, info = inner_solve(ScalarField.zeros(exp.grid), exp.data,
                              exp.solver_cfg)
        assert np.all(W.values == 0.0)
        assert info.iterations == 0

    def test_uniqueness_start_independence(self, rng):
        exp = make_exp(n=48)
        w = ScalarField(exp.grid, 0.05 * np.sin(
            2 * np.pi * exp.grid.coords()[0]))
        W1, _ = inner_solve(w, exp.data, exp.solver_cfg)
        W2, _ = inner_solve(w, exp.data, exp.solver_cfg,
                            x0=rng.standard_normal(exp.grid.shape))
        gap = h1_seminorm(ScalarField(exp.grid, W1.values - W2.values))
        assert gap <= 1e-8

    def test_negative_coefficient_rejected(self):
        # extremal model with delta below the growth constant: K dips negative
        exp = make_exp(model={"kind": "shape_times_quadratic",
                              "shape": "sign", "coeff": 0.5}, delta=0.6)
        xs = exp.grid.coords()[0]
        steep = ScalarField(exp.grid, 0.5 * np.sin(np.pi * xs))
        with pytest.raises(DomainError, match="zeroth-order coefficient"):
            zeroth_order_coefficient(exp.data, steep.values, 0.1, 200.0)

    def test_newton_budget_exhaustion(self):
        exp = make_exp(max_inner=0)
        with pytest.raises(NewtonStall):
            inner_solve(ScalarField.zeros(exp.grid), exp.data, exp.solver_cfg)

    def test_energy_identity(self):
        # testing the discrete equation with its own solution: the energy
        # product plus the (nonnegative) zeroth-order pairing equals the load
        exp = make_exp(n=48)
        cfg = exp.solver_cfg
        data = exp.data
        xs = exp.grid.coords()[0]
        w = ScalarField(exp.grid, 0.1 * np.sin(np.pi * xs))
        W, info = inner_solve(w, data, cfg)
        b = zeroth_order_coefficient(data, w.values, cfg.delta, cfg.k)
        rhs = transformed_rhs(data, w.values, cfg.delta)
        energy = float(np.sum(W.values * data.op.apply(W.values)))
        zero_pair = float(np.sum(b * sign_k(W.values, cfg.k) * W.values))
        load = float(np.sum(rhs * W.values))
        assert zero_pair >= 0.0
        tol = 10.0 * (cfg.inner_tol + cfg.cg_tol) * (1.0 + info.rhs_l2) \
            * max(1.0, float(np.max(np.abs(W.values))))
        assert energy + zero_pair == pytest.approx(load, abs=tol * 100)


class TestEstimateCheck:
    def test_zero_data_zero_slack(self):
        exp = make_exp(f_amp=0.0, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5)
        z = ScalarField.zeros(exp.grid)
        assert estimate_check(z, z, exp.data, 0.5) == 0.0

    def test_ball_preservation(self):
        # inputs inside the energy ball map to outputs inside the ball
        exp = make_exp(n=48)
        data, cfg = exp.data, exp.solver_cfg
        Z = data.ball_radius
        assert Z is not None
        xs = exp.grid.coords()[0]
        for scale in (0.0, 0.3, 0.9):
            w_raw = np.sin(np.pi * xs)
            w_raw *= scale * Z / h1_seminorm(ScalarField(exp.grid, w_raw))
            w = ScalarField(exp.grid, w_raw)
            assert h1_seminorm(w) <= Z * (1 + 1e-12)
            W, info = inner_solve(w, data, cfg)
            eps = 10.0 * (cfg.inner_tol + cfg.cg_tol) * (1.0 + info.rhs_l2)
            assert h1_seminorm(W) <= Z + eps
            assert estimate_check(w, W, data, cfg.delta) >= -eps


class TestOuterIteration:
    def test_zero_source_immediate(self):
        exp = make_exp(f_amp=0.0, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5)
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        assert np.all(w.values == 0.0)
        assert trace.converged
        assert len(trace.records) == 2  # the converging step plus the pinning one

    def test_matches_linear_solution_for_tiny_data(self):
        # with a tiny source the quadratic terms are second order and the
        # fixed point lands on the linear solution to within outer_tol
        amp = 1e-3
        exp = make_exp(n=64, f_amp=amp, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5, outer_tol=1e-6)
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        from quadgrad.grid import cg_solve
        lin = cg_solve(exp.data.op.apply, exp.data.f.values, tol=1e-13)
        gap = h1_seminorm(ScalarField(exp.grid, w.values - lin))
        assert gap <= 1e-6

    def test_ball_invariance_along_run(self):
        exp = make_exp(n=64)
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        assert trace.converged
        assert all(r.in_ball for r in trace.records)
        assert all(r.slack >= -trace.eps_solver for r in trace.records)

    def test_fixed_point_residual_bound(self):
        exp = make_exp(n=64, k=5000.0)
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        assert trace.residual <= 3.0 * exp.solver_cfg.outer_tol

    def test_delta_below_gamma_rejected(self):
        exp = make_exp()
        cfg = SolverConfig(delta=0.3, k=200.0)
        with pytest.raises(DomainError):
            outer_fixed_point(exp.data, cfg)

    def test_budget_exhaustion_keeps_trace(self):
        exp = make_exp(max_outer=3, rho=1.0, outer_tol=1e-14)
        with pytest.raises(MaxOuterIterations) as err:
            outer_fixed_point(exp.data, exp.solver_cfg)
        assert len(err.value.trace.records) == 3
        rows = err.value.trace.rows()
        assert all(json.loads(r)["increment"] > 0 for r in rows)


class TestContinuation:
    def test_zero_case_increments_vanish(self):
        exp = make_exp(f_amp=0.0, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5, k_schedule=[1.0, 10.0, 100.0])
        w, diag, traces = k_continuation(exp.data, exp.solver_cfg,
                                         n_ladder=(0.5, 1.0))
        assert all(inc == 0.0 for inc in diag.increments)
        assert np.all(diag.tail_energy == 0.0)

    def test_schedule_must_increase(self):
        exp = make_exp(k_schedule=[10.0, 5.0])
        with pytest.raises(DomainError):
            k_continuation(exp.data, exp.solver_cfg)

    def test_saturated_truncation_reproduces_solution(self):
        # every height above max K gives the identical discrete problem
        exp = make_exp(n=48, k_schedule=[1000.0, 4000.0])
        w, diag, traces = k_continuation(exp.data, exp.solver_cfg)
        assert diag.increments[0] <= 1e-13

    def test_benchmark_diagnostics(self):
        exp = make_exp(n=64, k_schedule=[5.0, 25.0, 200.0, 5000.0])
        w, diag, traces = k_continuation(exp.data, exp.solver_cfg,
                                         n_ladder=(0.05, 0.1, 0.2, 0.4))
        # increments nonincreasing across the schedule
        assert all(b <= a * (1 + 1e-9) + 1e-15
                   for a, b in zip(diag.increments, diag.increments[1:]))
        # tail energies nonincreasing in the height, zero above max |w|
        E = diag.tail_energy
        assert np.all(E[1:, :] <= E[:-1, :] * (1 + 1e-12) + 1e-15)
        max_w = diag.max_abs[-1]
        for nidx, height in enumerate((0.05, 0.1, 0.2, 0.4)):
            if height > max_w:
                assert E[nidx, -1] == 0.0
        # truncated increments vanish once the full increments do
        assert diag.truncated_increments.shape == (4, 3)
        assert np.all(diag.truncated_increments[:, -1]
                      <= 10.0 * max(diag.increments[-1], 1e-15))

    def test_failure_carries_partial_diagnostics(self):
        exp = make_exp(n=48, k_schedule=[5.0, 25.0], max_outer=2,
                       outer_tol=1e-14)
        with pytest.raises(MaxOuterIterations) as err:
            k_continuation(exp.data, exp.solver_cfg, n_ladder=(0.1,))
        assert hasattr(err.value, "diagnostics")


class TestTruncationMonotonicity:
    def test_heights_nest_and_saturate(self):
        # T_k(K) grows pointwise with the height and equals K beyond max K
        exp = make_exp(n=48)
        data, cfg = exp.data, exp.solver_cfg
        xs = exp.grid.coords()[0]
        w = 0.2 * np.sin(np.pi * xs)
        a_quad, grad_sq = data.node_quadratic_forms(w)
        from quadgrad.nonlinearity import k_delta_field
        K = k_delta_field(w, a_quad, grad_sq, cfg.delta, data.model)
        prev = None
        for k in (0.01, 0.1, 1.0, 10.0):
            tk = truncate(K, k)
            if prev is not None:
                assert np.all(tk >= prev)
            prev = tk
        assert np.array_equal(truncate(K, float(np.max(K)) + 1.0), K)


class TestResiduals:
    def test_zero_everything(self):
        exp = make_exp(f_amp=0.0, a0_value=0.0, model={"kind": "zero"},
                       delta=0.5)
        z = ScalarField.zeros(exp.grid)
        assert fixed_point_residual(z, exp.data, 0.5, k=10.0) == 0.0
        assert fixed_point_residual(z, exp.data, 0.5, k=None) == 0.0
        assert original_residual(z, exp.data, 0.5) == 0.0

    def test_untruncated_residual_after_saturated_solve(self):
        exp = make_exp(n=64, k=5000.0)
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        res = fixed_point_residual(w, exp.data, exp.solver_cfg.delta, k=None)
        assert res <= 3.0 * exp.solver_cfg.outer_tol

    def test_original_residual_refines(self):
        res = []
        hs = []
        for n in (32, 64, 128):
            exp = make_exp(n=n, k=5000.0)
            w, _ = outer_fixed_point(exp.data, exp.solver_cfg)
            res.append(original_residual(w, exp.data, exp.solver_cfg.delta))
            hs.append(exp.grid.h[0])
        order = np.polyfit(np.log(hs), np.log(res), 1)[0]
        assert order >= 0.9

    def test_norm_identity_exact_chain(self):
        g = Grid((1.0,), (48,))
        xs = g.coords()[0]
        u = ScalarField(g, 0.7 * np.sin(np.pi * xs))
        lhs, rhs, gap = norm_identity_gap(u, 0.8, exact_chain=True)
        assert gap <= 1e-10 * max(1.0, rhs)

    def test_norm_identity_refines(self):
        gaps, hs = [], []
        for n in (32, 64, 128):
            g = Grid((1.0,), (n,))
            xs = g.coords()[0]
            u = ScalarField(g, 0.7 * np.sin(np.pi * xs))
            _, _, gap = norm_identity_gap(u, 0.8, exact_chain=False)
            gaps.append(gap)
            hs.append(g.h[0])
        assert np.polyfit(np.log(hs), np.log(gaps), 1)[0] >= 0.9


class TestExtremalModel:
    def test_upper_extremal_shape_solves(self):
        # h(s) = gamma*sign(s) saturates the growth bound: the transformed
        # coefficient b touches zero where the iterate is positive, which is
        # the hardest admissible case for the inner solve
        exp = make_exp(n=48, model={"kind": "shape_times_quadratic",
                                    "shape": "sign", "coeff": 0.5},
                       k_schedule=[200.0, 5000.0])
        w, diag, traces = k_continuation(exp.data, exp.solver_cfg)
        assert all(t.converged for t in traces)
        assert diag.residuals[-1] <= 3.0 * exp.solver_cfg.outer_tol
        assert all(r.in_ball for t in traces for r in t.records)
        b = zeroth_order_coefficient(exp.data, w.values,
                                     exp.solver_cfg.delta, 5000.0)
        assert float(np.min(b)) >= 0.0


class TestVariableCoefficient2D:
    def test_per_cell_matrix_field(self, rng):
        from quadgrad.grid import MatrixField
        from quadgrad.validate import check_integration_by_parts
        g = Grid((1.0, 1.0), (10, 12))
        cells = np.zeros((11, 13, 2, 2))
        cells[..., 0, 0] = rng.uniform(1.0, 2.0, (11, 13))
        cells[..., 1, 1] = rng.uniform(1.0, 2.0, (11, 13))
        A = MatrixField(g, cells, alpha=1.0)
        cx, cy = A.edge_coefficients()
        assert cx.shape == (11, 12) and cy.shape == (10, 13)
        assert A.node_values().shape == (10, 12, 2, 2)
        res = check_integration_by_parts(A, rng)
        assert res.ok, res.line()


class TestRemarkMode:
    def test_explicit_delta_below_delta0_uses_lower_zero(self):
        base = load_benchmark("benchmark_1d.json")
        exp0 = build_experiment(base, overrides={"n": [48]})
        d0 = exp0.report.delta0
        z0 = exp0.report.Z_delta0
        delta = 0.5 * (0.5 + d0)  # inside [gamma, delta0)
        exp = build_experiment(base, overrides={
            "n": [48], "solver": {"delta": delta, "k_schedule": []}})
        assert exp.delta_mode == "explicit"
        assert exp.data.ball_radius is not None
        assert exp.data.ball_radius < z0  # the smaller zero bounds tighter
        w, trace = outer_fixed_point(exp.data, exp.solver_cfg)
        assert trace.converged
        assert h1_seminorm(w) <= exp.data.ball_radius + trace.eps_solver
