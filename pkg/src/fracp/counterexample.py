"""The explicit power-law solution sitting on an integrability boundary.

For parameters with s*p < n, the function u(x) = |x|^(-gamma) (gamma
from the exponent ladder; negative gamma means growth) solves the
constant-coefficient nonlocal p-problem with datum
f(x) = C |x|^(-n/r), where the constant

    C = p.v. integral over R^n of
        |1 - |y|^(-gamma)|^(p-2) (1 - |y|^(-gamma)) |e - y|^(-n-s p) dy

is computed here by radial reduction and symmetric principal-value
quadrature.  Its gradient lies in L^q_loc exactly below the ladder
exponent q, which is what the membership report verifies by two
independent routes (closed-form power integrals and refinement-based
divergence detection).  At p = 2 everything has classical closed forms
(the power rule for the fractional Laplacian), used as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import InvalidRegime, NonConvergence, OutOfRange
from .exponents import DerivedExponents, ProblemParams, sharp_exponents
from .quadrature import (
    PrincipalValueSpec,
    QuadratureResult,
    angular_weight,
    integrate,
    pv_integrate,
    sphere_surface,
)

__all__ = [
    "CounterexampleSpec",
    "build_counterexample",
    "constant_C",
    "with_constant",
    "riesz_power_constant",
    "kernel_normalization",
    "closed_form_constant",
    "PointwiseResidual",
    "pointwise_residual",
    "MembershipRow",
    "membership_report",
    "gradient_membership_boundary",
    "WitnessRow",
    "cz_estimate_witness",
]


@dataclass(frozen=True)
class CounterexampleSpec:
    """Power-law solution/datum pair attached to a ladder point."""

    params: ProblemParams
    ladder: DerivedExponents
    C: Optional[float] = None
    C_err: Optional[float] = None

    @property
    def gamma(self) -> float:
        return float(self.ladder.gamma)

    @property
    def q(self) -> float:
        return float(self.ladder.q)

    @property
    def r(self) -> float:
        return float(self.ladder.r)

    @property
    def datum_exponent(self) -> float:
        """|f| = |C| |x|^(-datum_exponent)."""
        return float(self.params.n) / float(self.ladder.r)

    def solution(self, x) -> np.ndarray:
        """u(x) = |x|^(-gamma) (vectorized)."""
        return np.abs(np.asarray(x, dtype=float)) ** (-self.gamma)

    def gradient_magnitude(self, x) -> np.ndarray:
        return abs(self.gamma) * np.abs(np.asarray(x, dtype=float)) ** (
            -self.gamma - 1.0
        )


def build_counterexample(params: ProblemParams, r) -> CounterexampleSpec:
    """Validate the regime (sp < n) and the ladder point r."""
    if not float(params.sp) < params.n:
        raise InvalidRegime(
            f"the power-law solution needs s*p < n, got s*p = "
            f"{float(params.sp):.6g}, n = {params.n}"
        )
    ladder = sharp_exponents(params, r)
    return CounterexampleSpec(params=params, ladder=ladder)


def _signed_power(w: np.ndarray, p: float) -> np.ndarray:
    """|w|^(p-2) w, with the w = 0 limit taken (0 for every p > 1)."""
    out = np.zeros_like(w)
    nz = w != 0.0
    out[nz] = np.abs(w[nz]) ** (p - 2.0) * w[nz]
    return out


def _phi(t: np.ndarray, gamma: float, p: float) -> np.ndarray:
    """|1 - t^(-gamma)|^(p-2) (1 - t^(-gamma)), cancellation-stable near 1."""
    t = np.asarray(t, dtype=float)
    w = -np.expm1(-gamma * np.log(t))
    return _signed_power(w, p)


@lru_cache(maxsize=500_000)
def _angular_scalar(t: float, n: int, exponent: float) -> float:
    return angular_weight(t, n, exponent, tol=1e-12).value


def _angular_values(t: np.ndarray, n: int, exponent: float) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if n == 1:
        return np.abs(1.0 - t) ** -exponent + (1.0 + t) ** -exponent
    return np.array([_angular_scalar(float(ti), n, exponent) for ti in t])


def _radial_integrand(spec: CounterexampleSpec):
    n = int(spec.params.n)
    p = float(spec.params.p)
    sp = float(spec.params.sp)
    gam = spec.gamma

    def F(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _phi(t, gam, p) * _angular_values(t, n, n + sp) * t ** (n - 1)

    return F


def _remainder_exponents(p: float, sp: float) -> Tuple[float, float, float]:
    """Three smallest distinct exponents of the removed-core expansion."""
    candidates = sorted([p - sp, 1.0, p + 1.0, p + 2.0 - sp, 3.0])
    out: List[float] = []
    for c in candidates:
        if not out or c > out[-1] + 1e-6:
            out.append(c)
    return tuple(out[:3])


def _pv_spec(spec: CounterexampleSpec, singular_point: float) -> PrincipalValueSpec:
    p = float(spec.params.p)
    sp = float(spec.params.sp)
    return PrincipalValueSpec(
        singular_point=singular_point,
        delta0=singular_point / 4.0,
        levels=12,
        extrapolation_order=3,
        remainder_exponents=_remainder_exponents(p, sp),
    )


def _endpoint_exponents(spec: CounterexampleSpec) -> Tuple[float, float]:
    """(left exponent at t=0, decay rate at t=infinity) of the integrand."""
    n = int(spec.params.n)
    p = float(spec.params.p)
    sp = float(spec.params.sp)
    gam = spec.gamma
    left = n - 1.0 - max(gam, 0.0) * (p - 1.0)
    decay = 1.0 + sp - max(-gam, 0.0) * (p - 1.0)
    return left, decay


def constant_C(spec: CounterexampleSpec, rel_tol: float = 1e-7) -> QuadratureResult:
    """Principal-value constant tying the datum to the power-law solution.

    Two passes: a coarse one to fix the scale, then a refined one at
    the requested relative tolerance.
    """
    F = _radial_integrand(spec)
    left, decay = _endpoint_exponents(spec)
    pv = _pv_spec(spec, 1.0)

    rough = pv_integrate(
        F, 0.0, math.inf, pv, tol=1e-4,
        left_exponent=left, decay_at_infinity=decay,
    )
    scale = max(abs(rough.value), 1e-6)
    fine = pv_integrate(
        F, 0.0, math.inf, pv, tol=rel_tol * scale,
        left_exponent=left, decay_at_infinity=decay,
    )
    return QuadratureResult(
        fine.value, fine.error_estimate,
        fine.evaluations + rough.evaluations, fine.converged,
    )


def with_constant(spec: CounterexampleSpec, rel_tol: float = 1e-7) -> CounterexampleSpec:
    """Return a copy of the spec with C filled in by quadrature."""
    res = constant_C(spec, rel_tol)
    return replace(spec, C=res.value, C_err=res.error_estimate)


# --------------------------------------------------------------------------
# p = 2 closed forms
# --------------------------------------------------------------------------


def riesz_power_constant(n: int, s: float, beta: float) -> float:
    """Eigenvalue of |x|^(-beta) under the normalized order-2s operator.

    (-Laplace)^s |x|^(-beta) = lambda * |x|^(-beta-2s) with
    lambda = 2^(2s) G((beta+2s)/2) G((n-beta)/2) / (G(beta/2) G((n-beta-2s)/2)),
    extended analytically in beta (gamma-function continuation).
    """
    num = gamma_fn((beta + 2.0 * s) / 2.0) * gamma_fn((n - beta) / 2.0)
    den = gamma_fn(beta / 2.0) * gamma_fn((n - beta - 2.0 * s) / 2.0)
    return float(2.0 ** (2.0 * s) * num / den)


def kernel_normalization(n: int, s: float) -> float:
    """Constant turning the raw kernel integral into (-Laplace)^s."""
    return float(
        4.0**s
        * gamma_fn(n / 2.0 + s)
        / (math.pi ** (n / 2.0) * abs(gamma_fn(-s)))
    )


def closed_form_constant(spec: CounterexampleSpec) -> float:
    """Closed form for C at p = 2 (power rule / normalization)."""
    p = float(spec.params.p)
    if abs(p - 2.0) > 1e-12:
        raise OutOfRange("closed form for C exists only at p = 2")
    n = int(spec.params.n)
    s = float(spec.params.s)
    return riesz_power_constant(n, s, spec.gamma) / kernel_normalization(n, s)


# --------------------------------------------------------------------------
# pointwise residual at off-singular radii
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PointwiseResidual:
    magnitude: float
    operator_value: float
    predicted: float
    relative_residual: float
    quadrature_error: float
    converged: bool


def pointwise_residual(
    spec: CounterexampleSpec,
    magnitudes: Sequence[float],
    rel_tol: float = 1e-7,
) -> List[PointwiseResidual]:
    """Evaluate the operator at |x| = m by fresh quadrature and compare.

    The radial reduction at radius m has its kernel singularity at
    t = m; nothing is rescaled back to the t = 1 computation, so this
    is an independent check of the scaling law value = C * m^(-n/r).
    """
    if spec.C is None:
        raise OutOfRange("fill in C first (use with_constant)")
    n = int(spec.params.n)
    p = float(spec.params.p)
    sp = float(spec.params.sp)
    gam = spec.gamma
    left, decay = _endpoint_exponents(spec)

    out = []
    for m in magnitudes:
        m = float(m)
        if m <= 0:
            raise OutOfRange("magnitudes must be positive")

        # |u(m) - u(t)|^(p-2) (u(m) - u(t)) = m^(-gam(p-1)) phi(t/m):
        # factoring keeps the difference cancellation-free near t = m.
        amp = m ** (-gam * (p - 1.0)) * m ** (-(n + sp))

        def F(t, _m=m, _amp=amp):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            tau = t / _m
            return _amp * _phi(tau, gam, p) * _angular_values(
                tau, n, n + sp
            ) * t ** (n - 1)

        pv = _pv_spec(spec, m)
        rough = pv_integrate(F, 0.0, math.inf, pv, tol=1e-4,
                             left_exponent=left, decay_at_infinity=decay)
        scale = max(abs(rough.value), 1e-6)
        res = pv_integrate(F, 0.0, math.inf, pv, tol=rel_tol * scale,
                           left_exponent=left, decay_at_infinity=decay)
        predicted = spec.C * m ** (-spec.datum_exponent)
        rel = abs(res.value - predicted) / max(abs(predicted), 1e-300)
        out.append(
            PointwiseResidual(
                magnitude=m, operator_value=res.value, predicted=predicted,
                relative_residual=rel, quadrature_error=res.error_estimate,
                converged=res.converged,
            )
        )
    return out


# --------------------------------------------------------------------------
# gradient membership
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MembershipRow:
    q_tilde: float
    closed_finite: bool
    closed_norm: Optional[float]
    numeric_verdict: str  # "finite" | "divergent"
    numeric_norm: Optional[float]
    refinement_slope: float


def _gradient_power_profile(spec: CounterexampleSpec, q_tilde: float):
    """Vectorized t^(n-1) |grad u(t)|^q_tilde on the radial half-line."""
    n = int(spec.params.n)
    gam = spec.gamma

    def prof(t):
        t = np.asarray(t, dtype=float)
        return abs(gam) ** q_tilde * t ** (
            n - 1.0 - (gam + 1.0) * q_tilde
        )

    return prof


def _refinement_slope(spec: CounterexampleSpec, q_tilde: float,
                      radius: float, decades: int = 5) -> Tuple[float, float]:
    """Log-slope of the inner-cutoff increments and the innermost integral.

    Integrates the radial gradient-power profile from eps_j = radius *
    10^-(j+1) up to the ball radius by plain adaptive quadrature and
    fits the decay/growth rate of the increments; negative slope means
    the integral converges as the cutoff shrinks.
    """
    prof = _gradient_power_profile(spec, q_tilde)
    values = []
    for j in range(decades + 1):
        eps = radius * 10.0 ** (-(j + 1))
        values.append(integrate(prof, eps, radius, 1e-13).value)
    increments = np.abs(np.diff(values))
    increments = np.maximum(increments, 1e-300)
    js = np.arange(1, decades + 1, dtype=float)
    slope = float(np.polyfit(js, np.log10(increments), 1)[0])
    return slope, values[-1]


def membership_report(
    spec: CounterexampleSpec,
    q_grid: Sequence[float],
    radius: float = 1.0,
) -> List[MembershipRow]:
    """Is |grad u| in L^q_tilde of the ball?  Two independent routes.

    Closed route: the radial power integral is finite iff
    q_tilde * (gamma + 1) < n, with an explicit norm.  Numeric route:
    adaptive quadrature with shrinking inner cutoff; the fitted slope
    of the increments decides convergence without using the closed
    form.
    """
    n = int(spec.params.n)
    gam = spec.gamma
    gam_exact = Fraction(spec.ladder.gamma)
    surf = sphere_surface(n - 1)
    rows = []
    for qt in q_grid:
        qt = float(qt)
        if qt <= 0:
            raise OutOfRange("q_tilde must be positive")
        # the verdict is decided in exact rational arithmetic (a float
        # qt is itself a rational), so there is no rounding knife-edge
        # when qt sits within an ulp of the boundary exponent
        a_exact = n - (gam_exact + 1) * Fraction(qt)
        closed_finite = a_exact > 0
        a = float(a_exact)
        closed_norm = None
        if closed_finite and a > 0.0:  # a can round to 0 one ulp in
            closed_norm = (
                abs(gam) ** qt * surf * radius**a / a
            ) ** (1.0 / qt)
        slope, inner_val = _refinement_slope(spec, qt, radius)
        numeric_finite = slope < -1e-3
        # |gamma|^qt is already inside the radial profile
        numeric_norm = (
            (surf * inner_val) ** (1.0 / qt) if numeric_finite else None
        )
        rows.append(
            MembershipRow(
                q_tilde=qt,
                closed_finite=closed_finite,
                closed_norm=closed_norm,
                numeric_verdict="finite" if numeric_finite else "divergent",
                numeric_norm=numeric_norm,
                refinement_slope=slope,
            )
        )
    return rows


def gradient_membership_boundary(
    spec: CounterexampleSpec, lo: float, hi: float, steps: int = 40,
    radius: float = 1.0,
) -> float:
    """Numeric boundary exponent: bisection on the refinement slope sign."""
    def diverges(qt: float) -> bool:
        slope, _ = _refinement_slope(spec, qt, radius)
        return slope >= -1e-3

    if diverges(lo) or not diverges(hi):
        raise OutOfRange(
            f"bracket [{lo:.6g}, {hi:.6g}] does not straddle the boundary"
        )
    a, b = float(lo), float(hi)
    for _ in range(steps):
        mid = 0.5 * (a + b)
        if diverges(mid):
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


# --------------------------------------------------------------------------
# solution diagnostics: seminorm on the unit ball, global weighted integral
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolutionDiagnostics:
    seminorm_power_ball: float  # [u]^p of order s on the unit ball
    weight_integral: float  # integral of |u|^(p-1) (1+|x|)^(-n-sp)


def _angular_profile(n: int, exponent: float):
    """Spline for Psi(tau) * (1-tau)^exponent_sing on tau in (0, 1).

    Removes the known |1-tau|^(-exponent+n-1) blow-up so the remainder
    is smooth enough to interpolate; used only for low-precision
    diagnostics, never for the principal-value constant.
    """
    from scipy.interpolate import CubicSpline

    sing = exponent - (n - 1.0)
    lo = np.exp(np.linspace(math.log(1e-9), math.log(0.5), 220))
    hi = 1.0 - np.exp(np.linspace(math.log(0.5), math.log(1e-9), 220))
    taus = np.concatenate([lo, hi[1:]])
    vals = np.array(
        [_angular_scalar(float(t), n, exponent) for t in taus]
    ) * (1.0 - taus) ** sing
    spline = CubicSpline(taus, vals)

    def psi(tau: np.ndarray) -> np.ndarray:
        # Capping tau just below 1 keeps the kernel finite when the
        # difference variable underflows; the mis-capped zone carries
        # negligible mass because the paired |u(t)-u(rho)| factor
        # vanishes there.
        tau = np.clip(np.asarray(tau, dtype=float), 1e-9, 1.0 - 1e-12)
        return spline(tau) * (1.0 - tau) ** -sing

    return psi


def solution_diagnostics(
    spec: CounterexampleSpec, nodes: int = 513
) -> SolutionDiagnostics:
    """Numerically confirm u has finite order-s energy on the unit ball
    and lies in the weighted far-field class of the operator."""
    n = int(spec.params.n)
    p = float(spec.params.p)
    s = float(spec.params.s)
    sp = s * p
    gam = spec.gamma
    surf = sphere_surface(n - 1)

    def weight_profile(t):
        t = np.asarray(t, dtype=float)
        return t ** (n - 1.0 - gam * (p - 1.0)) * (1.0 + t) ** (-n - sp)

    weight = surf * integrate(
        weight_profile, 0.0, math.inf, 1e-10,
        left_exponent=n - 1.0 - gam * (p - 1.0),
        decay_at_infinity=1.0 + sp + gam * (p - 1.0),
    ).value

    if n == 1:
        from .functionals import AnalyticClosure, Ball, GridFunction
        from .functionals import gagliardo_seminorm

        x = np.linspace(-1.0, 1.0, nodes)
        gf = GridFunction(
            x, np.abs(x) ** (-gam),
            AnalyticClosure(spec.solution, growth=max(-gam, 0.0)),
        )
        semi = gagliardo_seminorm(gf, Ball(0.0, 1.0), s, p)
    else:
        psi = _angular_profile(n, n + sp)

        def inner(t: float) -> float:
            def g(rho):
                rho = np.asarray(rho, dtype=float)
                diff = np.abs(_phi_diff(t, rho, gam))
                return (
                    rho ** (n - 1.0) * diff**p * psi(rho / t) * t ** (-n - sp)
                )

            return integrate(
                g, 0.0, t, 3e-6,
                left_exponent=n - 1.0 - max(gam, 0.0) * p,
                right_exponent=p - 1.0 - sp,
            ).value

        def outer(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.array([ti ** (n - 1.0) * inner(float(ti)) for ti in t])

        semi = 2.0 * surf * integrate(
            outer, 0.0, 1.0, 1e-4,
            left_exponent=2.0 * n - 1.0 - sp - gam * p,
        ).value
    return SolutionDiagnostics(
        seminorm_power_ball=float(semi), weight_integral=float(weight)
    )


def _phi_diff(t: float, rho: np.ndarray, gam: float) -> np.ndarray:
    """t^(-gam) - rho^(-gam), stable when rho is close to t."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        return t ** (-gam) * -np.expm1(-gam * (np.log(rho) - math.log(t)))


# --------------------------------------------------------------------------
# gradient-estimate witness table (n = 1)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WitnessRow:
    R: float
    center: float
    contains_origin: bool
    lhs: float
    rhs_gradient: float
    rhs_datum: float
    rhs_tail: float

    @property
    def rhs_total(self) -> float:
        return self.rhs_gradient + self.rhs_datum + self.rhs_tail

    @property
    def ratio(self) -> float:
        if math.isinf(self.lhs):
            return math.inf
        return self.lhs / self.rhs_total


def _power_mean(exponent: float, lo: float, hi: float) -> float:
    """Average of |x|^exponent over [lo, hi] (lo < hi, 0 not interior
    unless exponent > -1)."""
    def anti(x: float) -> float:
        sign = math.copysign(1.0, x)
        if abs(exponent + 1.0) < 1e-12:
            return sign * math.log(abs(x))
        return sign * abs(x) ** (exponent + 1.0) / (exponent + 1.0)

    return (anti(hi) - anti(lo)) / (hi - lo)


def cz_estimate_witness(
    spec: CounterexampleSpec,
    R_values: Sequence[float],
    include_origin: bool = True,
) -> List[WitnessRow]:
    """Gradient-scale estimate table for the explicit solution (n = 1).

    Off-origin rows use balls B_R(4.5 R), where every quantity is an
    honest power integral: lhs = (avg_{B_{R/2}} |u'|^q)^{1/q} against
    the gradient, datum, and tail terms on B_R.  The origin row is
    reported with lhs = inf when (gamma+1) q >= n (the sharp failure);
    nothing is asserted about it.
    """
    if spec.params.n != 1:
        raise OutOfRange("the witness table is one-dimensional")
    if spec.C is None:
        raise OutOfRange("fill in C first (use with_constant)")
    p = float(spec.params.p)
    s = float(spec.params.s)
    sp = s * p
    gam = spec.gamma
    q = spec.q
    r_exp = spec.r
    C = abs(spec.C)

    def grad_avg(exponent_q: float, lo: float, hi: float) -> float:
        val = abs(gam) ** exponent_q * _power_mean(
            -(gam + 1.0) * exponent_q, lo, hi
        )
        return val ** (1.0 / exponent_q)

    def tail_term(center: float, R: float) -> float:
        mean = _power_mean(-gam, center - R, center + R)

        def wpow(x):
            x = np.asarray(x, dtype=float)
            return (
                np.abs(np.abs(x) ** (-gam) - mean) ** (p - 1.0)
                * np.abs(x - center) ** (-1.0 - sp)
            )

        decay = 1.0 + sp - max(-gam, 0.0) * (p - 1.0)
        right = integrate(wpow, center + R, math.inf, 1e-12,
                          decay_at_infinity=decay).value
        left = integrate(lambda t: wpow(-t), R - center, math.inf, 1e-12,
                         decay_at_infinity=decay).value
        return (R**sp * (left + right)) ** (1.0 / (p - 1.0)) / R

    rows = []
    for R in R_values:
        R = float(R)
        c = 4.5 * R
        lhs = grad_avg(q, c - R / 2.0, c + R / 2.0)
        rhs_grad = grad_avg(p, c - R, c + R)
        datum_mean = C**r_exp * _power_mean(-1.0, c - R, c + R)
        rhs_datum = (R**sp) ** (1.0 / (p - 1.0)) * datum_mean ** (
            1.0 / (r_exp * (p - 1.0))
        ) / R
        rows.append(
            WitnessRow(
                R=R, center=c, contains_origin=False, lhs=lhs,
                rhs_gradient=rhs_grad, rhs_datum=rhs_datum,
                rhs_tail=tail_term(c, R),
            )
        )
    if include_origin and R_values:
        R = float(R_values[0])
        diverging = (gam + 1.0) * q >= 1.0
        rows.append(
            WitnessRow(
                R=R, center=0.0, contains_origin=True,
                lhs=math.inf if diverging else grad_avg(q, 1e-12, R / 2.0),
                rhs_gradient=math.inf
                if (gam + 1.0) * p >= 1.0
                else grad_avg(p, 1e-12, R),
                rhs_datum=math.inf,  # |f|^r is exactly non-integrable at 0
                rhs_tail=tail_term(0.0, R),
            )
        )
    return rows
