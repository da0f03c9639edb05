"""Seeded sampling validators for the pointwise bounds and grid identities.

Each check returns a ``CheckResult`` rather than raising: the verify command
treats failures as data, prints one line per check, and maps any failure to
its own exit code.  Relative slack scales with the magnitude of the bound
being tested, never with an absolute epsilon, because the underlying
inequalities are exact in real arithmetic while double precision is not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import ProblemConstants, c_lambda_bound
from .grid import (
    DiffusionOperator,
    Grid,
    MatrixField,
    ScalarField,
    gradient,
    h1_seminorm,
    hminus1_norm,
    inner_l2,
    lp_norm,
    riesz_representative,
)
from .nonlinearity import HModel, g_delta, k_delta_field, sign

REL_SLACK = 1e-12


@dataclass
class CheckResult:
    name: str
    ok: bool
    worst: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: worst margin {self.worst:.3e}{extra}"


def random_spd_matrices(rng, n, dim, alpha_min=0.5, spread=2.0):
    """SPD matrices with smallest eigenvalue >= alpha_min."""
    m = rng.standard_normal((n, dim, dim))
    mats = np.einsum("nij,nkj->nik", m, m) * spread
    mats += alpha_min * np.eye(dim)
    return mats


def _quad_forms(mats, zetas):
    return np.einsum("ni,nij,nj->n", zetas, mats, zetas)


def _sample_k_values(model, rng, n, dim, delta, gamma):
    mats = random_spd_matrices(rng, n, dim)
    zetas = rng.standard_normal((n, dim)) * rng.uniform(0.0, 3.0, (n, 1))
    zetas[rng.random(n) < 0.02] = 0.0
    t = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 2, n)
    t[rng.random(n) < 0.05] = 0.0
    a_quad = _quad_forms(mats, zetas)
    grad_sq = np.einsum("ni,ni->n", zetas, zetas)
    kv = k_delta_field(t, a_quad, grad_sq, delta, model)
    return kv, a_quad, t


def check_k_two_sided(model: HModel, gamma, c0, rng, n=10_000, dim=2,
                      delta=None) -> CheckResult:
    """Two-sided squeeze -(|delta-gamma|) A z.z <= K <= (c0+delta) A z.z."""
    delta = float(delta if delta is not None else rng.uniform(0.05, 3.0))
    kv, a_quad, _ = _sample_k_values(model, rng, n, dim, delta, gamma)
    slack = REL_SLACK * (c0 + delta) * a_quad
    upper = (c0 + delta) * a_quad + slack - kv
    lower = kv + abs(delta - gamma) * a_quad + slack
    worst = float(min(upper.min(initial=np.inf), lower.min(initial=np.inf)))
    return CheckResult(
        f"two-sided gradient-term bound (delta={delta:.3g})", worst >= 0.0, worst
    )


def check_k_nonnegative(model: HModel, gamma, c0, rng, n=10_000, dim=2,
                        delta=None) -> CheckResult:
    """One-sided bound 0 <= K <= (c0+delta) A z.z for delta >= gamma."""
    delta = float(delta if delta is not None else gamma * rng.uniform(1.0, 3.0))
    kv, a_quad, _ = _sample_k_values(model, rng, n, dim, delta, gamma)
    slack = REL_SLACK * (c0 + delta) * a_quad
    worst = float(np.min(kv + slack))
    return CheckResult(
        f"nonnegativity of gradient term (delta={delta:.3g} >= gamma)",
        worst >= 0.0, worst,
    )


def check_g_identity(rng, n=10_000) -> CheckResult:
    """Algebraic identity linking t + g*sign(t) to the substitution factor."""
    t = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 3, n)
    delta = 10.0 ** rng.uniform(-2, 1, n)
    lhs = t + g_delta(t, delta) * sign(t)
    rhs = (1.0 + delta * np.abs(t)) / delta * np.log1p(delta * np.abs(t)) * sign(t)
    scale = np.maximum(1.0, np.abs(rhs))
    worst = float(np.max(np.abs(lhs - rhs) / scale))
    return CheckResult("substitution identity for the correction term",
                       worst <= REL_SLACK, worst)


def check_g_envelope(rng, n=10_000) -> CheckResult:
    """0 <= g_delta(t) <= dstar^lam * C(lam) * |t|^(1+lam) for delta <= dstar."""
    lam = rng.uniform(0.05, 0.95, n)
    dstar = 10.0 ** rng.uniform(-2, 1, n)
    delta = dstar * rng.uniform(0.01, 1.0, n)
    t = rng.standard_normal(n) * 10.0 ** rng.uniform(-4, 3, n)
    g = g_delta(t, delta)
    env = dstar**lam * c_lambda_bound(lam) * np.abs(t) ** (1.0 + lam)
    slack = REL_SLACK * np.maximum(env, 1e-300)
    worst = float(min(np.min(g + slack), np.min(env + slack - g)))
    return CheckResult("correction-term envelope", worst >= 0.0, worst)


def check_g_growth(G, theta, delta1, rng, n=10_000) -> CheckResult:
    """0 <= g_delta(t) < G |t|^(1+theta) for 0 < delta <= delta1, t != 0."""
    delta = delta1 * rng.uniform(1e-3, 1.0, n)
    t = rng.standard_normal(n) * 10.0 ** rng.uniform(-4, 3, n)
    t[t == 0.0] = 1e-3
    g = g_delta(t, delta)
    env = G * np.abs(t) ** (1.0 + theta)
    slack = REL_SLACK * env
    worst = float(min(np.min(g), np.min(env + slack - g)))
    return CheckResult("growth-constant envelope", worst >= 0.0, worst)


def check_certificate(model: HModel, gamma, c0, rng, n=10_000, dim=2,
                      alpha_min=0.5) -> CheckResult:
    """Sampled growth certificate -c0 A x.x <= H sign(s) <= gamma A x.x."""
    mats = random_spd_matrices(rng, n, dim, alpha_min=alpha_min)
    xis = rng.standard_normal((n, dim)) * rng.uniform(0.0, 3.0, (n, 1))
    s = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 2, n)
    s[rng.random(n) < 0.05] = 0.0
    a_quad = _quad_forms(mats, xis)
    xi_sq = np.einsum("ni,ni->n", xis, xis)
    hs = model.evaluate(s, a_quad, xi_sq) * sign(s)
    slack = REL_SLACK * np.maximum(gamma, c0 + 1.0) * a_quad
    worst = float(min(np.min(gamma * a_quad + slack - hs),
                      np.min(hs + c0 * a_quad + slack)))
    return CheckResult(f"growth certificate of {model.kind}", worst >= 0.0, worst)


def check_h_vanishes_at_zero_gradient(model: HModel, rng, n=2000) -> CheckResult:
    s = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 2, n)
    h0 = model.evaluate(s, np.zeros(n), np.zeros(n))
    worst = float(np.max(np.abs(h0)))
    return CheckResult("nonlinearity vanishes at zero gradient", worst == 0.0, worst)


def check_operator_symmetry(op: DiffusionOperator, rng, pairs=20) -> CheckResult:
    g = op.grid
    worst = 0.0
    for _ in range(pairs):
        u = rng.standard_normal(g.shape)
        v = rng.standard_normal(g.shape)
        left = float(np.sum(op.apply(u) * v))
        right = float(np.sum(u * op.apply(v)))
        scale = max(1.0, abs(left))
        worst = max(worst, abs(left - right) / scale)
    return CheckResult("operator symmetry", worst <= 1e-13, worst)


def check_integration_by_parts(A: MatrixField, rng, pairs=20) -> CheckResult:
    """<op u, v> equals the edge-coefficient energy product to roundoff."""
    op = DiffusionOperator(A)
    g = A.grid
    coef = A.edge_coefficients()
    worst = 0.0
    for _ in range(pairs):
        u = ScalarField(g, rng.standard_normal(g.shape))
        v = ScalarField(g, rng.standard_normal(g.shape))
        lhs = inner_l2(ScalarField(g, op.apply(u.values)), v)
        gu, gv = gradient(u).components, gradient(v).components
        rhs = sum(float(np.sum(c * a * b)) for c, a, b in zip(coef, gu, gv))
        rhs *= g.node_measure
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return CheckResult("discrete integration by parts", worst <= 1e-12, worst)


def check_holder(grid: Grid, exponents, rng, trials=20) -> CheckResult:
    """Three-factor Hoelder inequality on the shared nodal quadrature."""
    p1, p2, p3 = exponents
    worst = np.inf
    for _ in range(trials):
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        v = ScalarField(grid, rng.standard_normal(grid.shape))
        w = ScalarField(grid, rng.standard_normal(grid.shape))
        lhs = float(np.sum(np.abs(f.values * v.values * w.values))
                    * grid.node_measure)
        rhs = lp_norm(f, p1) * lp_norm(v, p2) * lp_norm(w, p3)
        worst = min(worst, rhs * (1.0 + REL_SLACK) - lhs)
    return CheckResult("discrete Hoelder inequality", worst >= 0.0, float(worst))


def check_sobolev_holds(grid: Grid, p, constant, rng, trials=40) -> CheckResult:
    """|v|_p <= C_h |grad v|_2 for random fields, C_h the estimated constant."""
    worst = np.inf
    for _ in range(trials):
        v = ScalarField(grid, rng.standard_normal(grid.shape))
        worst = min(worst,
                    constant * (1.0 + 1e-9) * h1_seminorm(v) - lp_norm(v, p))
    return CheckResult("discrete Sobolev inequality at estimated constant",
                       worst >= 0.0, float(worst))


def check_dual_norm(grid: Grid, rng, trials=10) -> CheckResult:
    """<f, v> <= |f|_dual |grad v|_2, equality at the Riesz representative."""
    worst = np.inf
    for _ in range(trials):
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        dual = hminus1_norm(f)
        z = riesz_representative(f)
        v = ScalarField(grid, rng.standard_normal(grid.shape))
        gap = dual * h1_seminorm(v) * (1.0 + 1e-10) - inner_l2(f, v)
        eq_gap = abs(inner_l2(f, z) - dual * h1_seminorm(z)) / max(dual**2, 1e-300)
        worst = min(worst, float(gap), float(1e-8 - eq_gap))
    return CheckResult("dual-norm duality and Riesz equality", worst >= 0.0,
                       float(worst))


def constants_cross_checks(c: ProblemConstants, rng) -> list:
    """Engine identities on perturbed copies of the given constants."""
    from . import constants as cmod

    results = []
    worst_g = 0.0
    worst_phi = 0.0
    for _ in range(50):
        scale = 10.0 ** rng.uniform(-0.5, 0.5)
        cc = ProblemConstants(
            N=c.N, alpha=c.alpha * scale, gamma=c.gamma, c0=c.c0, q=c.q,
            norm_f_N2=c.norm_f_N2 * 10.0 ** rng.uniform(-0.3, 0.3),
            norm_f_Hm1=c.norm_f_Hm1,
            norm_a0_N2=min(c.norm_a0_N2, 0.5 * c.alpha * scale / c.C_N**2),
            norm_a0_q=c.norm_a0_q * 10.0 ** rng.uniform(-0.3, 0.3),
            C_N=c.C_N,
            sobolev_exponent=c.sobolev_exponent,
            f_norm_exponent=c.f_norm_exponent,
        )
        theta = cc.theta
        G1 = cmod.compute_G(cc, theta)
        G2 = cmod.delta1(cc) ** theta * cmod.c_lambda_bound(theta)
        worst_g = max(worst_g, abs(G1 - G2) / G1)
        d = rng.uniform(0.0, cmod.delta1(cc))
        closed = cmod.phi_at_min(d, cc, theta, G1)
        direct = cmod.phi(d, cmod.z_delta(d, cc, theta, G1), cc, theta, G1)
        worst_phi = max(worst_phi, abs(closed - direct) / max(1.0, abs(closed)))
    results.append(CheckResult("growth-constant route agreement",
                               worst_g <= 1e-14, worst_g))
    results.append(CheckResult("profile minimum closed form",
                               worst_phi <= 1e-12, worst_phi))
    return results
