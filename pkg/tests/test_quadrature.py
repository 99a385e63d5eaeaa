"""Adaptive quadrature, principal values, and the angular kernel factor."""

import math

import numpy as np
import pytest

from fracp.errors import NonConvergence, OutOfRange, SingularArgument
from fracp.quadrature import (
    PrincipalValueSpec,
    angular_weight,
    gauss_rule,
    integrate,
    pv_integrate,
    sphere_surface,
    stable_sum,
)


# --------------------------------------------------------------------------
# plain adaptive integration with declared endpoint behavior
# --------------------------------------------------------------------------


def test_gauss_rule_polynomial_exactness():
    x, w = gauss_rule(8)
    for deg in range(16):
        exact = (1.0 - (-1.0) ** (deg + 1)) / (deg + 1)
        assert abs(float(w @ x**deg) - exact) < 1e-14


def test_sphere_surfaces():
    assert sphere_surface(0) == pytest.approx(2.0)
    assert sphere_surface(1) == pytest.approx(2.0 * math.pi)
    assert sphere_surface(2) == pytest.approx(4.0 * math.pi)
    with pytest.raises(OutOfRange):
        sphere_surface(-1)


def test_stable_sum_matches_fsum(rng):
    vals = rng.normal(0.0, 1.0, 10_000) * 10.0 ** rng.uniform(-8, 8, 10_000)
    assert stable_sum(vals) == pytest.approx(math.fsum(vals), rel=1e-15)


def test_left_endpoint_singularity():
    res = integrate(lambda x: x**-0.5, 0.0, 1.0, 1e-12, left_exponent=-0.5)
    assert res.converged
    assert res.value == pytest.approx(2.0, abs=1e-11)


def test_two_endpoint_singularities():
    # Beta(1/2, 2/3)
    exact = math.gamma(0.5) * math.gamma(2.0 / 3.0) / math.gamma(7.0 / 6.0)
    res = integrate(
        lambda x: x**-0.5 * (1.0 - x) ** (-1.0 / 3.0),
        0.0, 1.0, 1e-10,
        left_exponent=-0.5, right_exponent=-1.0 / 3.0,
    )
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-10)


def test_infinite_upper_limit():
    res = integrate(
        lambda x: x**-2.0, 1.0, math.inf, 1e-12, decay_at_infinity=2.0
    )
    assert res.converged
    assert res.value == pytest.approx(1.0, rel=1e-11)


def test_combined_singularity_and_decay():
    # integral over (0, inf) of x^(-1/2) (1+x)^(-2) = pi/2
    res = integrate(
        lambda x: x**-0.5 * (1.0 + x) ** -2.0,
        0.0, math.inf, 1e-12,
        left_exponent=-0.5, decay_at_infinity=2.5,
    )
    assert res.converged
    assert res.value == pytest.approx(math.pi / 2.0, rel=1e-10)


def test_nonfinite_integrand_is_reported():
    def f(x):
        return np.where(x > 0.5, np.nan, 1.0)

    with pytest.raises(SingularArgument):
        integrate(f, 0.0, 1.0)


def test_require_raises_on_undeclared_singularity():
    res = integrate(lambda x: x**-0.9, 0.0, 1.0, 1e-12, max_intervals=64)
    assert not res.converged
    with pytest.raises(NonConvergence):
        res.require("undeclared endpoint")


# --------------------------------------------------------------------------
# symmetric principal values
# --------------------------------------------------------------------------


def test_pv_log_ratio():
    spec = PrincipalValueSpec(singular_point=0.0)
    res = pv_integrate(lambda x: 1.0 / x, -1.0, 2.0, spec, 1e-10)
    assert res.converged
    assert res.value == pytest.approx(math.log(2.0), abs=1e-10)


def test_pv_odd_integrand_vanishes():
    spec = PrincipalValueSpec(singular_point=0.0)
    res = pv_integrate(lambda x: np.cos(x) / x, -1.0, 1.0, spec, 1e-10)
    assert res.converged
    assert abs(res.value) < 1e-10


def test_pv_exponential_over_x():
    # 2 * Shi(1), Shi the hyperbolic sine integral
    shi1 = sum(1.0 / ((2 * k + 1) * math.factorial(2 * k + 1))
               for k in range(12))
    spec = PrincipalValueSpec(singular_point=0.0)
    res = pv_integrate(lambda x: np.exp(x) / x, -1.0, 1.0, spec, 1e-10)
    assert res.converged
    assert res.value == pytest.approx(2.0 * shi1, rel=1e-9)


def test_pv_detects_nonexistent_limit():
    spec = PrincipalValueSpec(singular_point=0.0)
    with pytest.raises(NonConvergence):
        pv_integrate(lambda x: 1.0 / x**2, -1.0, 1.0, spec, 1e-8)


def test_pv_singular_point_must_be_interior():
    spec = PrincipalValueSpec(singular_point=2.0)
    with pytest.raises(SingularArgument):
        pv_integrate(lambda x: 1.0 / (x - 2.0), -1.0, 1.0, spec)


def test_pv_spec_validation():
    with pytest.raises(OutOfRange):
        PrincipalValueSpec(singular_point=0.0, delta0=-1.0)
    with pytest.raises(OutOfRange):
        PrincipalValueSpec(singular_point=0.0, levels=1)
    with pytest.raises(OutOfRange):
        PrincipalValueSpec(
            singular_point=0.0, remainder_exponents=(2.0, 1.0, 3.0)
        )


# --------------------------------------------------------------------------
# angular factor of the reduced kernel
# --------------------------------------------------------------------------


def _angular_direct(t: float, n: int, exponent: float) -> float:
    """Dense polar quadrature oracle, valid away from t = 1."""
    phi, w = gauss_rule(400)
    phi = 0.5 * math.pi * (phi + 1.0)
    w = 0.5 * math.pi * w
    rad = (1.0 - t) ** 2 + 4.0 * t * np.sin(0.5 * phi) ** 2
    out = rad ** (-exponent / 2.0)
    if n > 2:
        out = out * np.sin(phi) ** (n - 2)
    return float(sphere_surface(n - 2) * (w @ out))


def test_angular_one_dimensional_exact():
    res = angular_weight(0.5, 1, 2.5)
    assert res.value == pytest.approx(0.5**-2.5 + 1.5**-2.5, rel=1e-15)


def test_angular_three_dimensional_closed_form():
    for t in (0.2, 0.7, 1.4, 3.0):
        res = angular_weight(t, 3, 4.2)
        assert res.value == pytest.approx(
            _angular_direct(t, 3, 4.2), rel=1e-9
        )


def test_angular_inversion_identity():
    # |e - t w|-average satisfies A(t) = t^(-e) A(1/t)
    for n in (1, 2, 3, 4):
        for t in (0.25, 0.6, 0.85):
            e = 2.0 + 0.7 * n
            lhs = angular_weight(t, n, e).value
            rhs = t**-e * angular_weight(1.0 / t, n, e).value
            assert lhs == pytest.approx(rhs, rel=1e-8), (n, t)


def test_angular_small_t_approaches_full_sphere():
    for n in (2, 3, 4):
        res = angular_weight(1e-10, n, 3.3)
        assert res.value == pytest.approx(sphere_surface(n - 1), rel=1e-8)


def test_angular_rejects_singular_ratio():
    with pytest.raises(SingularArgument):
        angular_weight(1.0, 2, 2.5)
    with pytest.raises(OutOfRange):
        angular_weight(-0.5, 2, 2.5)
