"""Grid functions, seminorms, tails, coverings, pointwise inequalities."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracp.errors import (
    CoincidenceViolated,
    DivergentTail,
    OutOfRange,
    PreconditionViolated,
)
from fracp.functionals import (
    AnalyticClosure,
    Ball,
    GridFunction,
    PowerTail,
    ZeroBeyond,
    ball_average,
    coincidence_tail_bound,
    cover,
    dyadic_tail_chain,
    elementary_superlevel,
    gagliardo_seminorm,
    gradient_lp_average,
    interpolation_inequality_check,
    load_grid_function,
    lp_average,
    lp_norm,
    minkowski_check,
    save_grid_function,
    supported_seminorm_power,
    tail,
    tail_decomposition,
)
from fracp import exponents


def identity_grid(half_width: float = 8.0, cells: int = 256) -> GridFunction:
    x = np.linspace(-half_width, half_width, cells + 1)
    return GridFunction(x, x.copy(), PowerTail(1.0, 1.0, odd=True))


def constant_grid(value: float, half_width: float = 8.0,
                  cells: int = 256) -> GridFunction:
    x = np.linspace(-half_width, half_width, cells + 1)
    return GridFunction(
        x, np.full_like(x, value),
        AnalyticClosure(lambda y, _v=value: np.full(np.shape(y), _v), 0.0),
    )


# --------------------------------------------------------------------------
# grid functions and persistence
# --------------------------------------------------------------------------


class TestGridFunction:
    def test_requires_uniform_mesh(self):
        x = np.array([0.0, 1.0, 2.5])
        with pytest.raises(OutOfRange):
            GridFunction(x, np.zeros(3), ZeroBeyond())

    def test_interior_is_piecewise_linear(self):
        gf = identity_grid()
        probe = np.array([-3.21, 0.0, 0.125, 5.875])
        np.testing.assert_allclose(gf(probe), probe, atol=1e-14)

    def test_exterior_model_takes_over(self):
        gf = identity_grid(half_width=2.0, cells=16)
        np.testing.assert_allclose(gf(np.array([3.0, -5.0])), [3.0, -5.0])
        zz = GridFunction(gf.x, gf.values.copy(), ZeroBeyond())
        np.testing.assert_allclose(zz(np.array([3.0, -5.0])), [0.0, 0.0])

    def test_slopes(self):
        x = np.linspace(0.0, 1.0, 5)
        gf = GridFunction(x, x**2, ZeroBeyond())
        np.testing.assert_allclose(gf.slopes, np.diff(x**2) / 0.25)

    def test_covers(self):
        gf = identity_grid(half_width=2.0)
        assert gf.covers(Ball(0.0, 2.0))
        assert not gf.covers(Ball(1.0, 1.5))

    def test_roundtrip_and_determinism(self, tmp_path):
        gf = identity_grid(half_width=3.0, cells=48)
        p1 = save_grid_function(gf, tmp_path / "a.csv")
        p2 = save_grid_function(gf, tmp_path / "b.csv")
        assert p1.read_bytes() == p2.read_bytes()
        back = load_grid_function(p1)
        np.testing.assert_array_equal(back.x, gf.x)
        np.testing.assert_array_equal(back.values, gf.values)
        probe = np.array([5.0, -9.0])
        np.testing.assert_allclose(back(probe), gf(probe))


# --------------------------------------------------------------------------
# averages and norms against closed forms
# --------------------------------------------------------------------------


def test_ball_average_of_identity_is_center():
    gf = identity_grid()
    assert ball_average(gf, Ball(0.5, 1.0)) == pytest.approx(0.5, abs=1e-13)


def test_lp_norm_and_average_consistency():
    gf = constant_grid(3.0)
    ball = Ball(0.25, 2.0)
    assert lp_norm(gf, ball, 2.0) == pytest.approx(3.0 * 2.0, rel=1e-13)
    assert lp_average(gf, ball, 2.0) == pytest.approx(3.0, rel=1e-13)
    assert lp_average(gf, ball, 2.0, shift=3.0) == pytest.approx(0.0, abs=1e-13)


def test_gradient_lp_average_of_identity():
    gf = identity_grid()
    assert gradient_lp_average(gf, Ball(0.0, 1.0), 3.0) == pytest.approx(1.0)


# --------------------------------------------------------------------------
# Gagliardo seminorms
# --------------------------------------------------------------------------


def closed_double_power(beta: float, L: float) -> float:
    """Double integral of |x-y|^beta over a square of side L (beta > -1)."""
    return 2.0 * L ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))


def test_identity_seminorm_is_measure_squared():
    # |x - y|^2 / |x - y|^(1 + 1) == 1: the double integral is exactly 4
    gf = identity_grid()
    val = gagliardo_seminorm(gf, Ball(0.0, 1.0), 0.5, 2.0)
    assert val == pytest.approx(4.0, rel=1e-4)


def test_identity_seminorm_other_order():
    gf = identity_grid()
    val = gagliardo_seminorm(gf, Ball(0.0, 1.0), 0.4, 2.0)
    assert val == pytest.approx(closed_double_power(0.2, 2.0), rel=1e-3)


def test_constant_seminorm_vanishes():
    gf = constant_grid(2.5)
    val = gagliardo_seminorm(gf, Ball(0.0, 1.0), 0.5, 2.0)
    assert abs(val) <= 1e-12


def test_supported_seminorm_against_dense_oracle():
    x = np.linspace(-1.0, 1.0, 129)
    hat = np.maximum(1.0 - np.abs(x), 0.0)
    w = GridFunction(x, hat, ZeroBeyond())
    p, s = 2.0, 0.25
    sp = s * p
    val = supported_seminorm_power(w, p, s)

    # oracle: midpoint Riemann inside the support (the integrand is
    # |x-y|^(p-1-sp) for Lipschitz w, so the diagonal is harmless),
    # plus the exact closed form for pairs with one point outside,
    # where |w(x) - w(y)| == |w(y)|.
    y = np.linspace(-1.0, 1.0, 2001)[:-1] + 5e-4
    dy = y[1] - y[0]
    vals = np.interp(y, x, hat)
    D = np.abs(vals[:, None] - vals[None, :]) ** p
    with np.errstate(divide="ignore"):
        K = np.abs(y[:, None] - y[None, :]) ** (-1.0 - sp)
    np.fill_diagonal(K, 0.0)
    inside = float((D * K).sum()) * dy * dy
    outside = 2.0 * float(
        (vals**p * ((1.0 + y) ** -sp + (1.0 - y) ** -sp) / sp).sum()
    ) * dy
    assert val == pytest.approx(inside + outside, rel=2e-3)


def test_supported_seminorm_requires_zero_boundary():
    x = np.linspace(-1.0, 1.0, 65)
    w = GridFunction(x, np.ones_like(x), ZeroBeyond())
    with pytest.raises(PreconditionViolated):
        supported_seminorm_power(w, 2.0, 0.5)


# --------------------------------------------------------------------------
# tails
# --------------------------------------------------------------------------


def test_tail_of_constant_closed_form():
    p, s, c = 3.0, 0.6, 3.0
    sp = s * p
    gf = constant_grid(c)
    expected = c * (2.0 / sp) ** (1.0 / (p - 1.0))
    assert tail(gf, Ball(0.0, 1.0), p, s) == pytest.approx(expected, rel=1e-9)


def test_tail_of_identity_closed_form():
    p, s = 2.0, 0.75
    sp = s * p
    gf = identity_grid()
    for R in (0.5, 1.0, 2.0):
        expected = (2.0 / (sp - p + 1.0)) ** (1.0 / (p - 1.0)) * R
        assert tail(gf, Ball(0.0, R), p, s) == pytest.approx(
            expected, rel=1e-9
        )


def test_tail_shift_removes_constant():
    gf = constant_grid(5.0)
    assert tail(gf, Ball(0.0, 1.0), 2.0, 0.75, shift=5.0) == pytest.approx(
        0.0, abs=1e-12
    )


def test_divergent_tail_is_rejected():
    # growth (p-1) = 1.2 outpaces sp = 1.0
    x = np.linspace(-1.0, 1.0, 33)
    gf = GridFunction(x, x.copy(), PowerTail(1.0, 1.2, odd=True))
    with pytest.raises(DivergentTail):
        tail(gf, Ball(0.0, 0.5), 2.0, 0.5)


def test_tail_decomposition_bound_and_combination(rng):
    for _ in range(25):
        cells = int(rng.integers(16, 64))
        R = float(rng.uniform(0.5, 2.0))
        y_o = float(rng.uniform(-0.5, 0.5))
        dist = float(rng.uniform(0.0, 0.8)) * R
        x_o = y_o + dist * float(rng.choice([-1.0, 1.0]))
        r = float(rng.uniform(0.1, 0.95)) * (R - dist)
        p = float(rng.uniform(1.2, 3.5))
        s = float(rng.uniform(0.1, 0.9))
        mesh = np.linspace(y_o - 4 * R, y_o + 4 * R, cells + 1)
        gf = GridFunction(mesh, rng.normal(0.0, 1.0, cells + 1), ZeroBeyond())
        rep = tail_decomposition(gf, Ball(x_o, r), Ball(y_o, R), p, s)
        assert rep.kernel_constant == pytest.approx(
            (2.0 / (s * p)) ** (1.0 / (p - 1.0))
        )
        scale = max(rep.bound_far, 1e-300)
        assert rep.piece_far <= rep.bound_far * (1 + 1e-9) + 1e-300, (
            rep.piece_far / scale
        )
        assert rep.piece_mid <= rep.bound_mid * (1 + 1e-9) + 1e-300
        assert rep.piece_means <= rep.bound_means * (1 + 1e-9) + 1e-300
        assert rep.combination_lhs <= rep.combination_rhs * (1 + 1e-9) + 1e-300


def test_dyadic_tail_chain_structure():
    gf = identity_grid(half_width=16.0, cells=512)
    rep = dyadic_tail_chain(gf, Ball(0.25, 0.5), 3, 2.0, 0.75)
    assert rep.levels == 3
    assert len(rep.average_terms) == 3
    assert rep.lhs > 0 and rep.coarse_term > 0
    assert rep.implied_constant is not None
    assert rep.implied_constant < 50.0


def test_coincidence_tail_bound_checks_agreement():
    u = identity_grid(half_width=8.0, cells=256)
    inner, outer = Ball(0.0, 0.5), Ball(0.0, 1.0)
    bent = np.where(np.abs(u.x) < 1.0, 0.5 * u.values, u.values)
    v = GridFunction(u.x, bent, PowerTail(1.0, 1.0, odd=True))
    rep = coincidence_tail_bound(u, v, inner, outer, 2.0, 0.75)
    assert rep.lhs <= 4.0 * (rep.tail_term + rep.lp_term)

    truly_different = GridFunction(
        u.x, 2.0 * u.values, PowerTail(2.0, 1.0, odd=True)
    )
    with pytest.raises(CoincidenceViolated):
        coincidence_tail_bound(u, truly_different, inner, outer, 2.0, 0.75)


# --------------------------------------------------------------------------
# covering
# --------------------------------------------------------------------------


def test_cover_is_exact_and_overlap_geometric():
    report = cover(Ball(0.0, 1.0), 0.125, overlap_levels=5, samples=10_000)
    assert report.covered
    for k in range(6):
        assert report.max_overlap[k] <= 8 * 2**k
    assert report.count == 17  # lattice spacing r inside [-1, 1]


def test_cover_rejects_oversized_small_radius():
    with pytest.raises(OutOfRange):
        cover(Ball(0.0, 1.0), 1.5)


# --------------------------------------------------------------------------
# pointwise and summed inequalities
# --------------------------------------------------------------------------


def test_superlevel_preconditions():
    with pytest.raises(PreconditionViolated):
        elementary_superlevel(0.5, 2.0, 1.0, [2.0], [0.0])
    with pytest.raises(PreconditionViolated):
        elementary_superlevel(1.5, 2.0, 1.0, [0.5], [0.0])  # |a| < K


@given(
    gamma=st.floats(1.0, 4.0),
    da=st.floats(0.0, 3.0),
    K=st.floats(0.1, 10.0),
    a_mag=st.floats(1.0, 100.0),
    b=st.floats(-100.0, 100.0),
    sign=st.sampled_from([-1.0, 1.0]),
)
def test_superlevel_holds_pointwise(gamma, da, K, a_mag, b, sign):
    res = elementary_superlevel(gamma, gamma + da, K, [sign * K * a_mag], [b])
    assert res.holds


@given(
    p=st.floats(1.0, 5.0),
    k=st.integers(2, 5),
    m=st.integers(2, 8),
    seed=st.integers(0, 2**31),
)
def test_minkowski_holds(p, k, m, seed):
    terms = np.random.default_rng(seed).normal(0.0, 1.0, (k, m))
    lhs, rhs = minkowski_check(terms, p)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


def test_interpolation_constant_is_one(rng):
    params = exponents.derive(1, 1.5, 0.5)
    interp = exponents.interpolation_exponents(params, 2.0, 1.2)
    for _ in range(500):
        m = int(rng.integers(3, 40))
        values = rng.exponential(1.0, m) * 10.0 ** rng.uniform(-3, 3)
        weights = rng.exponential(1.0, m)
        lhs, rhs = interpolation_inequality_check(values, weights, interp)
        assert lhs <= rhs * (1 + 1e-10)


def test_interpolation_rejects_bad_shapes():
    params = exponents.derive(1, 1.5, 0.5)
    interp = exponents.interpolation_exponents(params, 2.0, 1.2)
    with pytest.raises(OutOfRange):
        interpolation_inequality_check([1.0, 2.0], [1.0], interp)
    with pytest.raises(OutOfRange):
        interpolation_inequality_check([1.0], [-1.0], interp)
