"""Power-law solution oracle: operator constant, residuals, membership.

Two parameter configurations are exercised throughout:

* config A: n = 1, p = 3/2, s = 1/2, r = 2    (gamma = -1/2, q = 2)
* config B: n = 2, p = 2,   s = 3/4, r = 3/2  (gamma = -1/6, q = 12/5)

Config B is linear, so the operator constant also has a closed form
through the Riesz-type composition rule; the principal-value quadrature
must agree with it without sharing any code path.
"""

import math

import numpy as np
import pytest

from fracp import exponents
from fracp.counterexample import (
    build_counterexample,
    closed_form_constant,
    constant_C,
    cz_estimate_witness,
    gradient_membership_boundary,
    membership_report,
    pointwise_residual,
    riesz_power_constant,
    solution_diagnostics,
    with_constant,
)
from fracp.errors import OutOfRange


@pytest.fixture(scope="module")
def spec_a():
    params = exponents.derive(1, 1.5, 0.5)
    return with_constant(build_counterexample(params, 2.0))


@pytest.fixture(scope="module")
def spec_b():
    params = exponents.derive(2, 2.0, 0.75)
    return with_constant(build_counterexample(params, 1.5))


# --------------------------------------------------------------------------
# the operator constant
# --------------------------------------------------------------------------


def test_constant_config_a_frozen(spec_a):
    assert spec_a.C == pytest.approx(-2.008241531156, rel=1e-7)
    assert spec_a.C_err < 1e-6 * abs(spec_a.C)


def test_constant_config_b_vs_closed_form(spec_b):
    closed = closed_form_constant(spec_b)
    assert closed == pytest.approx(-0.6319092671090971, rel=1e-12)
    assert spec_b.C == pytest.approx(closed, rel=1e-5)


def test_constant_positive_gamma_closed_form():
    # gamma = 3/10 at (3, 2, 3/5) with r = 2; quadrature route vs the
    # composition rule for |x|^(-gamma)
    params = exponents.derive(3, 2.0, 0.6)
    spec = build_counterexample(params, 2.0)
    assert spec.gamma == pytest.approx(0.3)
    closed = closed_form_constant(spec)
    assert closed == pytest.approx(2.8182210657045035, rel=1e-12)
    numeric = constant_C(spec, rel_tol=1e-7)
    assert numeric.value == pytest.approx(closed, rel=1e-5)


def test_constant_vanishes_at_gamma_zero():
    # r chosen so the power is 0: the solution is constant and the
    # operator must annihilate it on both routes
    params = exponents.derive(3, 2.0, 0.6)
    spec = build_counterexample(params, 2.5)
    assert spec.gamma == 0.0
    assert closed_form_constant(spec) == 0.0
    numeric = constant_C(spec, rel_tol=1e-7)
    assert abs(numeric.value) <= 1e-10


def test_riesz_power_constant_reflection():
    # the gamma-quotient is invariant under beta -> n - 2s - beta
    # (swap the two numerator factors and the two denominator factors)
    n, s = 2, 0.75
    beta = 0.3
    val = riesz_power_constant(n, s, beta)
    other = riesz_power_constant(n, s, n - 2.0 * s - beta)
    assert math.isfinite(val) and val > 0
    assert val == pytest.approx(other, rel=1e-12)


# --------------------------------------------------------------------------
# pointwise residuals: quadrature operator value vs C |x|^(datum power)
# --------------------------------------------------------------------------


@pytest.mark.parametrize("which", ["a", "b"])
def test_pointwise_residuals(which, spec_a, spec_b):
    spec = spec_a if which == "a" else spec_b
    rows = pointwise_residual(spec, [0.5, 2.0])
    for row in rows:
        assert row.converged
        assert row.relative_residual <= 1e-4
        assert row.quadrature_error < 1e-5 * abs(row.predicted)


def test_pointwise_residual_rejects_origin(spec_a):
    with pytest.raises(OutOfRange):
        pointwise_residual(spec_a, [0.0])


# --------------------------------------------------------------------------
# gradient integrability membership: closed route vs numeric route
# --------------------------------------------------------------------------


def test_membership_verdicts_agree_off_boundary(spec_a):
    q = spec_a.q
    rows = membership_report(
        spec_a, [0.7 * q, 0.8 * q, 0.95 * q, 1.05 * q, 1.2 * q]
    )
    for row in rows:
        closed = "finite" if row.closed_finite else "divergent"
        assert closed == row.numeric_verdict, row.q_tilde
    finite_rows = [r for r in rows if r.closed_finite]
    assert finite_rows
    gam = spec_a.gamma
    for r in finite_rows:
        # the numeric norm stops at the inner cutoff 10^-6, so it sits
        # below the closed value by about (10^-6)^(a/q_tilde) where
        # a = n - (gamma+1) q_tilde is the convergence margin; compare
        # values only where that truncation is a few percent
        margin = 1.0 - (gam + 1.0) * r.q_tilde
        if margin >= 0.15:
            assert r.numeric_norm == pytest.approx(r.closed_norm, rel=5e-2)
        assert r.numeric_norm <= r.closed_norm * (1 + 1e-9)


@pytest.mark.parametrize(
    "which, expected", [("a", 2.0), ("b", 2.4)]
)
def test_membership_boundary_two_routes(which, expected, spec_a, spec_b):
    spec = spec_a if which == "a" else spec_b
    assert spec.q == pytest.approx(expected, rel=1e-12)
    numeric = gradient_membership_boundary(
        spec, lo=0.8 * expected, hi=1.2 * expected
    )
    assert abs(numeric - expected) <= 0.02


def test_membership_bracket_validation(spec_a):
    with pytest.raises(OutOfRange):
        gradient_membership_boundary(spec_a, lo=2.5, hi=3.0)


# --------------------------------------------------------------------------
# solution diagnostics and the witness table
# --------------------------------------------------------------------------


def test_solution_diagnostics_frozen(spec_a, spec_b):
    d1 = solution_diagnostics(spec_a)
    assert d1.seminorm_power_ball == pytest.approx(3.144501, rel=2e-4)
    assert d1.weight_integral == pytest.approx(3.4960767, rel=1e-6)
    d2 = solution_diagnostics(spec_b)
    assert d2.seminorm_power_ball == pytest.approx(1.6718934, rel=2e-3)
    assert d2.weight_integral == pytest.approx(1.8272945, rel=1e-6)


def test_witness_ratio_scale_invariant(spec_a):
    rows = cz_estimate_witness(spec_a, [0.25, 1.0, 4.0],
                               include_origin=False)
    ratios = [row.ratio for row in rows]
    assert ratios[0] == pytest.approx(0.0293531847, rel=1e-6)
    assert max(ratios) - min(ratios) <= 1e-9 * ratios[0]
    for row in rows:
        assert row.lhs <= row.rhs_total


def test_witness_origin_row_diverges(spec_a):
    rows = cz_estimate_witness(spec_a, [1.0], include_origin=True)
    origin = [r for r in rows if r.contains_origin]
    assert len(origin) == 1
    assert math.isinf(origin[0].lhs)
    assert math.isinf(origin[0].rhs_datum)


# --------------------------------------------------------------------------
# spec construction sanity
# --------------------------------------------------------------------------


def test_solution_and_gradient_shapes(spec_a):
    x = np.array([0.25, 1.0, 4.0])
    u = spec_a.solution(x)
    g = spec_a.gradient_magnitude(x)
    gam = spec_a.gamma
    np.testing.assert_allclose(u, x**-gam)
    np.testing.assert_allclose(g, abs(gam) * x ** (-gam - 1.0))


def test_datum_exponent_identity(spec_a, spec_b):
    # the datum power solves (exponent) * r = n exactly on both configs,
    # which is what makes |f| = |C| |x|^(-n/r) sit exactly on the L^r edge
    for spec in (spec_a, spec_b):
        n = float(spec.params.n)
        assert spec.datum_exponent * spec.r == pytest.approx(n, rel=1e-12)
