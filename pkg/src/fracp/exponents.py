"""Exponent calculus for the nonlocal p-energy.

Everything in this module is closed-form arithmetic on the parameter
triple (n, p, s) and the derived integrability windows.  All formulas
are written so that feeding ``fractions.Fraction`` inputs keeps every
rational quantity exact; binary64 is the default fast path.  The only
intrinsically irrational outputs (the step size ``h_o``) are returned
as floats.

Conventions:

* ``p_prime`` is the conjugate exponent p/(p-1).
* ``sp_prime`` is s*p/(p-1); the whole calculus requires sp_prime > 1.
* ``gamma`` is the blow-up rate of the model solution |x|^(-gamma); it
  is negative when the model solution grows at infinity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

from .errors import EmptyWindow, InvalidRegime, OutOfRange

Number = Union[int, float, "fractions.Fraction"]  # noqa: F821 (doc only)

#: Relative margin used to keep strict inequalities away from their
#: endpoints in floating point.
OPEN_MARGIN = 1e-9


def _margin(endpoint) -> float:
    return OPEN_MARGIN * max(1.0, abs(float(endpoint)))


def _require_open(value, lo, hi, name: str) -> None:
    """Check lo < value < hi with a relative safety margin.

    ``hi`` may be ``math.inf`` for a one-sided window.
    """
    if not value > lo + _margin(lo):
        raise OutOfRange(
            f"{name} = {float(value):.12g} must exceed {float(lo):.12g} "
            f"(open endpoint, relative margin {OPEN_MARGIN:g})"
        )
    if math.isfinite(float(hi)) and not value < hi - _margin(hi):
        raise OutOfRange(
            f"{name} = {float(value):.12g} must be below {float(hi):.12g} "
            f"(open endpoint, relative margin {OPEN_MARGIN:g})"
        )


class AlphaBranch(enum.Enum):
    """Which branch of the integrability threshold is active."""

    SUB_THRESHOLD = "sub_threshold"      # s <= s_o: kernel-driven branch
    SUPER_THRESHOLD = "super_threshold"  # s > s_o: alpha saturates at 1/p


@dataclass(frozen=True)
class ProblemParams:
    """Validated parameter triple with its first-layer derived exponents."""

    n: Number
    p: Number
    s: Number
    p_prime: Number
    sp: Number
    sp_prime: Number
    p_star: Number
    s_o: Number
    alpha: Number
    alpha_branch: AlphaBranch


@dataclass(frozen=True)
class DerivedExponents:
    """Integrability ladder attached to a choice of r in its open window."""

    params: ProblemParams
    r: Number
    r_min: Number
    r_max: Number
    q: Number
    mu: Number
    gamma: Number


@dataclass(frozen=True)
class HigherDiffBudget:
    """Gain exponents available to the difference-quotient iteration."""

    params: ProblemParams
    a_tilde: Number
    epsilon: Number
    usable: bool
    chi: Optional[Number]
    eps_bar: Number
    theta: Number
    beta: Number
    gamma_o: Number
    h_o: float
    sigma_seq: Tuple[Number, ...]
    theta_seq: Tuple[Number, ...]
    theta_limit: Number
    comparison_radius_exponent: Optional[Number]


@dataclass(frozen=True)
class InterpolationExponents:
    """Exponents of the three-norm interpolation for the datum."""

    params: ProblemParams
    r: Number
    a_tilde: Number
    epsilon: Number
    inner_exponent: Number
    tail_power: Number
    theta_holder: Number
    lhs_power: Number
    bookkeeping_residual: Number
    inner_identity_residual: Number
    splitting_identity_residual: Number

    def verify(self, tol: float = 1e-12) -> bool:
        """True when all bookkeeping identities hold to ``tol`` (absolute)."""
        return (
            abs(float(self.bookkeeping_residual)) <= tol
            and abs(float(self.inner_identity_residual)) <= tol
            and abs(float(self.splitting_identity_residual)) <= tol
        )


def derive(n: Number, p: Number, s: Number) -> ProblemParams:
    """Validate (n, p, s) and compute the first layer of exponents.

    Raises
    ------
    OutOfRange
        if n < 1, p <= 1, or s is outside (0, 1).
    InvalidRegime
        if s*p/(p-1) <= 1, where the gradient-scale calculus is empty.
    """
    if not (isinstance(n, int) or float(n).is_integer()) or n < 1:
        raise OutOfRange(f"n must be a positive integer, got {n!r}")
    if not p > 1 + _margin(1):
        raise OutOfRange(f"p must exceed 1, got {float(p):.12g}")
    _require_open(s, 0, 1, "s")

    p_prime = p / (p - 1)
    sp = s * p
    sp_prime = s * p / (p - 1)
    if not sp_prime > 1 + _margin(1):
        raise InvalidRegime(
            f"s*p/(p-1) = {float(sp_prime):.12g} <= 1: the datum has no "
            "gradient-scale integrability window for these parameters"
        )

    p_star = n * p / (n - sp) if sp < n else math.inf
    # Threshold order below which the kernel-driven alpha branch is active.
    s_o = ((p - 1) / p) * (1 + n / (p * (p - 1)))
    alpha_kernel = n / ((p - 1) * (n + p * (sp_prime - 1)))
    alpha_floor = 1 / p
    if s <= s_o:
        alpha = max(alpha_kernel, alpha_floor)
        branch = AlphaBranch.SUB_THRESHOLD
    else:
        alpha = alpha_floor
        branch = AlphaBranch.SUPER_THRESHOLD
    assert alpha < 1 / (p - 1)

    return ProblemParams(
        n=n, p=p, s=s, p_prime=p_prime, sp=sp, sp_prime=sp_prime,
        p_star=p_star, s_o=s_o, alpha=alpha, alpha_branch=branch,
    )


def r_window(params: ProblemParams) -> Tuple[Number, Number]:
    """Open admissible window (r_min, r_max) for the datum exponent r."""
    p, n = params.p, params.n
    r_min = max(1, params.alpha * p)
    r_max = n / ((p - 1) * (params.sp_prime - 1))
    return r_min, r_max


def sharp_exponents(params: ProblemParams, r: Number) -> DerivedExponents:
    """Gradient integrability gain q, weight mu = r/q, and blow-up rate gamma.

    ``q`` has a pole at ``r_max``; calls inside the relative margin of
    either endpoint raise OutOfRange naming the pole.
    """
    n, p = params.n, params.p
    r_min, r_max = r_window(params)
    if not r_min < r_max:
        raise EmptyWindow(
            f"the r-window ({float(r_min):.12g}, {float(r_max):.12g}) is empty"
        )
    try:
        _require_open(r, r_min, r_max, "r")
    except OutOfRange as exc:
        raise OutOfRange(
            f"{exc}; q(r) has a pole at r_max = {float(r_max):.12g}"
        ) from None

    denom = n - r * (p - 1) * (params.sp_prime - 1)
    q = r * n * (p - 1) / denom
    mu = r / q
    gamma = n / (r * (p - 1)) - params.sp_prime
    return DerivedExponents(
        params=params, r=r, r_min=r_min, r_max=r_max, q=q, mu=mu, gamma=gamma,
    )


def epsilon_gain(params: ProblemParams, a_tilde: Number) -> Number:
    """Spare differentiability bought by datum integrability a_tilde*p."""
    n, p = params.n, params.p
    return params.sp_prime - 1 - (n / p) * (1 / (a_tilde * (p - 1)) - 1)


def _theta(params: ProblemParams) -> Number:
    p, sp = params.p, params.sp
    return sp + 2 if p >= 2 else p + sp / 2


def budget(
    params: ProblemParams,
    a_tilde: Number,
    chi: Optional[Number] = None,
    q: Optional[Number] = None,
    terms: int = 12,
) -> HigherDiffBudget:
    """Differentiability budget for datum integrability a_tilde (per unit p).

    ``a_tilde`` must lie in the closed window [alpha, 1/(p-1)].  With
    ``chi`` supplied (coefficient oscillation rate in (0, 1)) the
    variable-coefficient reduction caps the gain at chi/(p-1) and the
    constant min(1, p-1) shrinks to min(1, (p-1)^2).  With ``q``
    supplied the stricter open window used by the gradient estimate is
    enforced; EmptyWindow is raised when that window is empty.

    The returned sequences ``sigma_seq`` (differentiability orders,
    increasing to 1) and ``theta_seq`` (second-difference exponents,
    increasing to ``theta_limit = 1 + gamma_o``) have ``terms`` entries.
    ``usable`` is False when the budget is degenerate (epsilon == 0 or,
    with chi, a zero oscillation allowance): every gain exponent is then
    0 and ``h_o`` collapses to 0.
    """
    n, p = params.n, params.p
    if a_tilde < params.alpha or a_tilde > 1 / (p - 1):
        raise OutOfRange(
            f"a_tilde = {float(a_tilde):.12g} outside the closed window "
            f"[{float(params.alpha):.12g}, {float(1 / (p - 1)):.12g}]"
        )
    if chi is not None:
        _require_open(chi, 0, 1, "chi")
    if q is not None:
        if not q > 0:
            raise OutOfRange(f"q must be positive, got {float(q):.12g}")
        r_of_q = q * n / ((p - 1) * (n + q * (params.sp_prime - 1)))
        upper = min(
            1 / (p - 1),
            n / (p * (p - 1) * (params.sp_prime - 1)),
            r_of_q / p,
        )
        if not params.alpha + _margin(params.alpha) < upper - _margin(upper):
            raise EmptyWindow(
                f"no admissible a_tilde for q = {float(q):.12g}: window "
                f"({float(params.alpha):.12g}, {float(upper):.12g}) is empty"
            )
        _require_open(a_tilde, params.alpha, upper, "a_tilde")

    eps = epsilon_gain(params, a_tilde)
    assert eps >= -_margin(1) and eps <= params.sp_prime - 1 + _margin(1)
    eps = max(eps, 0 * eps)

    if chi is None:
        eps_bar = eps * min(1, p - 1)
    else:
        eps_bar = min(1, (p - 1) * (p - 1)) * min(eps, chi / (p - 1))

    theta = _theta(params)
    sp = params.sp
    denom = theta - sp + eps_bar * p
    beta = (theta - sp) / denom
    gamma_o = eps_bar * (theta - p) / denom
    usable = eps_bar > 0
    if usable:
        h_o = min(
            (1 / 16) ** (1 / float(beta)),
            (1 / 7) ** (1 / (1 - float(beta))),
        )
    else:
        h_o = 0.0

    ratio = (theta - sp) / (theta - sp + eps_bar)
    sigma_seq = tuple(1 - (1 - params.s) * ratio**i for i in range(terms))
    theta_seq = tuple(
        (sig * (theta - sp) + eps_bar * theta) / denom for sig in sigma_seq
    )
    theta_limit = 1 + gamma_o

    comparison_exponent = None
    if chi is not None:
        extra = max(0, 2 - p) * params.p_prime / (p - 1)
        comparison_exponent = ((p - 1) / chi) * (1 + extra)

    return HigherDiffBudget(
        params=params, a_tilde=a_tilde, epsilon=eps, usable=usable, chi=chi,
        eps_bar=eps_bar, theta=theta, beta=beta, gamma_o=gamma_o, h_o=h_o,
        sigma_seq=sigma_seq, theta_seq=theta_seq, theta_limit=theta_limit,
        comparison_radius_exponent=comparison_exponent,
    )


def fw_exponent_residual(params: ProblemParams, a_tilde: Number) -> Number:
    """Signed residual of the rescaling bookkeeping identity.

    The identity ties the datum scaling weight to the gain exponent:
    n - n/p + s - n/(a_tilde*p) == (1 - s + epsilon)*(p - 1).
    """
    n, p, s = params.n, params.p, params.s
    eps = epsilon_gain(params, a_tilde)
    lhs = n - n / p + s - n / (a_tilde * p)
    rhs = (1 - s + eps) * (p - 1)
    return lhs - rhs


def fw_exponent_identity(
    params: ProblemParams, a_tilde: Number, tol: float = 1e-12
) -> bool:
    """True when the rescaling identity holds to ``tol`` (absolute)."""
    return abs(float(fw_exponent_residual(params, a_tilde))) <= tol


def a_tilde_window(params: ProblemParams, r: Number) -> Tuple[Number, Number]:
    """Open admissible window for a_tilde given the datum exponent r."""
    n, p = params.n, params.p
    upper = min(
        1 / (p - 1),
        n / (p * (p - 1) * (params.sp_prime - 1)),
        r / p,
    )
    return params.alpha, upper


def interpolation_exponents(
    params: ProblemParams, r: Number, a_tilde: Number
) -> InterpolationExponents:
    """Exponents of the three-norm splitting of the datum norm.

    The splitting writes ||f||_{a_tilde*p}^{1/(p-1)} as a product of an
    inner-scale norm (exponent ``inner_exponent``) raised to mu and a
    coarse norm (exponent mu*q) raised to ``tail_power``, with Hoelder
    weight ``theta_holder`` in (0, 1).  The constant is exactly 1.
    """
    ladder = sharp_exponents(params, r)
    lo, hi = a_tilde_window(params, r)
    if not lo + _margin(lo) < hi - _margin(hi):
        raise EmptyWindow(
            f"no admissible a_tilde for r = {float(r):.12g}: window "
            f"({float(lo):.12g}, {float(hi):.12g}) is empty"
        )
    _require_open(a_tilde, lo, hi, "a_tilde")

    n, p = params.n, params.p
    eps = epsilon_gain(params, a_tilde)
    mu, q = ladder.mu, ladder.q
    inner_exponent = n * mu * p / (n - eps * p)
    tail_power = mu * q * (params.sp_prime - 1) / n
    theta_holder = a_tilde * p * (p - 1) * (params.sp_prime - 1) / n
    assert 0 < theta_holder < 1
    lhs_power = 1 / (p - 1)

    bookkeeping = (mu + tail_power) - lhs_power
    inner_identity = (1 - theta_holder) / (a_tilde * (p - 1)) - (
        1 - eps * p / n
    )
    splitting_identity = (a_tilde * p - theta_holder * mu * q) / (
        1 - theta_holder
    ) - inner_exponent

    return InterpolationExponents(
        params=params, r=r, a_tilde=a_tilde, epsilon=eps,
        inner_exponent=inner_exponent, tail_power=tail_power,
        theta_holder=theta_holder, lhs_power=lhs_power,
        bookkeeping_residual=bookkeeping,
        inner_identity_residual=inner_identity,
        splitting_identity_residual=splitting_identity,
    )


def elementary_superlevel_constants(
    gamma: Number, alpha: Number, K: Number
) -> Tuple[Number, Number]:
    """Constants (2^gamma, 2^(alpha-1) K^(gamma-alpha)) of the superlevel bound.

    For |a| >= K > 0, gamma >= 1 and alpha >= gamma:
    |a|^gamma <= 2^gamma |a-b|^gamma + 2^(alpha-1) K^(gamma-alpha) |b|^alpha.
    Kept here because it is pure exponent arithmetic; the evaluated
    inequality lives with the other pointwise checks.
    """
    from .errors import PreconditionViolated

    if not (gamma >= 1 and alpha >= gamma and K > 0):
        raise PreconditionViolated(
            "need gamma >= 1, alpha >= gamma, K > 0; got "
            f"gamma={float(gamma):.6g}, alpha={float(alpha):.6g}, "
            f"K={float(K):.6g}"
        )
    return 2**gamma, 2 ** (alpha - 1) * K ** (gamma - alpha)
