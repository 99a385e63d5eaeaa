"""Variational solver for the one-dimensional nonlocal Dirichlet problem.

Minimizes the kernel energy

    J(u) = (1/p) double-integral over pairs meeting the domain of
           a(x,y) |u(x)-u(y)|^p |x-y|^(-1-s p)  -  2 * integral of f u

over continuous piecewise-linear functions with prescribed values
outside the domain.  The discrete energy is an explicit finite sum of
terms W_k |c_k . u|^p (closed forms on the diagonal cells, a corner
substitution on adjacent cells, tensor Gauss on separated cells, and
mapped Gauss beyond the truncation window), so gradients and Hessians
of the discrete functional are exact and the minimizer is found by
damped Newton steps.  The weak form's factor 2 on the data term is
kept, which makes the pointwise operator of a smooth solution equal f
with no extra constant.

Also provides the frozen-coefficient surrogate, the inhomogeneity a
frozen solution picks up from the coefficient mismatch outside the
ball, and the homogeneous-replacement comparison experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize as sopt

from .errors import (
    CoefficientViolation,
    DegenerateFit,
    NonConvergence,
    OutOfRange,
)
from .exponents import derive, epsilon_gain
from .functionals import (
    AnalyticClosure,
    Ball,
    ExteriorModel,
    GridFunction,
    PowerTail,
    ZeroBeyond,
    gagliardo_seminorm,
    lp_norm,
    supported_seminorm_power,
)
from .quadrature import gauss_rule

__all__ = [
    "CoefficientField",
    "frozen_average",
    "freeze",
    "DiscreteProblem",
    "SolveResult",
    "assemble",
    "solve",
    "harmonic_replacement",
    "weak_residual",
    "induced_inhomogeneity",
    "bulge_data_constant",
    "ComparisonRow",
    "ComparisonReport",
    "comparison_experiment",
]


# --------------------------------------------------------------------------
# coefficient fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric measurable kernel coefficient with ellipticity bounds.

    `chi` and `validity_radius` describe an optional oscillation
    modulus: |a(x,y) - a(x_o,x_o)| <= upper * R^chi on B_R(x_o)^2 for
    R <= validity_radius.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lower: float
    upper: float
    chi: Optional[float] = None
    validity_radius: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.lower <= self.upper:
            raise CoefficientViolation(
                f"ellipticity bounds need 0 < lower <= upper, got "
                f"[{self.lower:.6g}, {self.upper:.6g}]"
            )
        if self.chi is not None and not 0 < self.chi < 1:
            raise CoefficientViolation(
                f"oscillation exponent chi must lie in (0, 1), got {self.chi}"
            )

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.func(x, y), dtype=float)
        return np.broadcast_to(out, np.broadcast_shapes(x.shape, y.shape))

    @staticmethod
    def constant(value: float = 1.0) -> "CoefficientField":
        return CoefficientField(
            lambda x, y: np.full(np.broadcast_shapes(
                np.shape(x), np.shape(y)), float(value)),
            lower=float(value), upper=float(value),
        )

    def validate(self, window: Ball, samples: int = 4096, seed: int = 0):
        """Sampled checks of bounds, symmetry, and declared oscillation."""
        rng = np.random.default_rng(seed)
        span = 8.0 * window.radius
        x = window.center + rng.uniform(-span, span, samples)
        y = window.center + rng.uniform(-span, span, samples)
        axy = self(x, y)
        ayx = self(y, x)
        slack = 1e-12 * max(1.0, self.upper)
        if np.any(axy < self.lower - slack) or np.any(axy > self.upper + slack):
            raise CoefficientViolation(
                f"coefficient leaves [{self.lower:.6g}, {self.upper:.6g}]: "
                f"sampled range [{axy.min():.6g}, {axy.max():.6g}]"
            )
        worst = float(np.max(np.abs(axy - ayx)))
        if worst > slack:
            raise CoefficientViolation(
                f"coefficient is not symmetric: max |a(x,y)-a(y,x)| = "
                f"{worst:.3e}"
            )
        if self.chi is not None and self.validity_radius is not None:
            for frac in (1.0, 0.5, 0.25):
                R = self.validity_radius * frac
                osc = self.oscillation(window.center, R,
                                       samples=samples // 4, seed=seed + 1)
                if osc > self.upper * R**self.chi + slack:
                    raise CoefficientViolation(
                        f"oscillation {osc:.3e} on radius {R:.3g} exceeds "
                        f"declared modulus {self.upper:.3g} * R^{self.chi:.3g}"
                    )

    def oscillation(self, x_o: float, R: float, samples: int = 2048,
                    seed: int = 0) -> float:
        """Sampled sup of |a(x,y) - a(x_o,x_o)| over B_R(x_o)^2."""
        rng = np.random.default_rng(seed)
        x = x_o + rng.uniform(-R, R, samples)
        y = x_o + rng.uniform(-R, R, samples)
        ref = float(self(np.array(x_o), np.array(x_o)))
        return float(np.max(np.abs(self(x, y) - ref)))


def frozen_average(coeff: CoefficientField, x_o: float, R: float,
                   order: int = 16) -> float:
    """Average of the coefficient over B_R(x_o) x B_R(x_o)."""
    nodes, weights = gauss_rule(order)
    x = x_o + R * nodes
    a = coeff(x[:, None], x[None, :])
    w2 = weights[:, None] * weights[None, :]
    return float((w2 * a).sum() / 4.0)


def freeze(coeff: CoefficientField, x_o: float, R: float) -> CoefficientField:
    """Replace the coefficient by its ball average inside B_R(x_o)^2."""
    avg = frozen_average(coeff, x_o, R)
    base = coeff.func

    def frozen(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (np.abs(x - x_o) < R) & (np.abs(y - x_o) < R)
        return np.where(inside, avg, base(x, y))

    # Averaging stays within the original ellipticity bounds; the
    # piecewise-defined field no longer carries a single modulus.
    return CoefficientField(frozen, coeff.lower, coeff.upper)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


def _signed_pow(t: np.ndarray, e: float) -> np.ndarray:
    out = np.zeros_like(t)
    nz = t != 0.0
    out[nz] = np.abs(t[nz]) ** (e - 1.0) * t[nz]
    return out


def _exterior_growth(model: ExteriorModel) -> float:
    if isinstance(model, PowerTail):
        return max(model.exponent, 0.0)
    if isinstance(model, AnalyticClosure):
        return model.growth
    return 0.0


@dataclass
class DiscreteProblem:
    """Assembled discrete energy: terms, load vector, mesh bookkeeping."""

    domain: Ball
    s: float
    p: float
    coeff: CoefficientField
    nodes: np.ndarray  # all breakpoints, left exterior .. right exterior
    omega_slice: slice  # node index range of the domain closure
    unknown_idx: np.ndarray  # node indices solved for (domain interior)
    fixed_values: np.ndarray  # full value vector with unknowns zeroed
    term_idx: np.ndarray  # (K, 4) int32 indices into the value vector
    term_coeff: np.ndarray  # (K, 4) interpolation coefficients
    term_w: np.ndarray  # (K,) positive weights
    load: np.ndarray  # full-length linear-term vector (2 * int f phi)
    n_extra: int  # appended far-field value slots
    extra_values: np.ndarray  # fixed far-field data values
    farfield_share: float  # fraction of kernel mass beyond the node window
    exterior_model: ExteriorModel
    _quadratic: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_values(self) -> int:
        return len(self.nodes) + self.n_extra

    def full_vector(self, unknowns: np.ndarray) -> np.ndarray:
        v = self.fixed_values.copy()
        v[self.unknown_idx] = unknowns
        return v

    def differences(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("kj,kj->k", self.term_coeff,
                         values[self.term_idx])

    def energy(self, values: np.ndarray) -> float:
        t = self.differences(values)
        return float(
            (self.term_w @ np.abs(t) ** self.p) / self.p
            - self.load @ values
        )

    def gradient(self, values: np.ndarray) -> np.ndarray:
        t = self.differences(values)
        g = self.term_w * _signed_pow(t, self.p - 1.0)
        out = np.zeros(self.n_values)
        for j in range(4):
            out += np.bincount(
                self.term_idx[:, j],
                weights=g * self.term_coeff[:, j],
                minlength=self.n_values,
            )
        out -= self.load
        return out

    def curvature_matrix(self, values: np.ndarray,
                         smoothing: float = 0.0) -> np.ndarray:
        """Dense d2J with |t|^(p-2) mollified by `smoothing` (for p < 2)."""
        t = self.differences(values)
        p = self.p
        if smoothing > 0.0:
            base = (t * t + smoothing * smoothing) ** (0.5 * p - 1.0)
            hw = self.term_w * base * (
                1.0 + (p - 2.0) * t * t / (t * t + smoothing * smoothing)
            )
        else:
            hw = self.term_w * (p - 1.0) * np.abs(t) ** (p - 2.0)
            hw[~np.isfinite(hw)] = 0.0
        return self._rank_one_sum(hw)

    def quadratic_matrix(self) -> np.ndarray:
        """Sum of W c c^T (the p = 2 operator matrix), cached."""
        if self._quadratic is None:
            self._quadratic = self._rank_one_sum(self.term_w)
        return self._quadratic

    def _rank_one_sum(self, weights: np.ndarray) -> np.ndarray:
        nv = self.n_values
        flat = np.zeros(nv * nv)
        idx = self.term_idx.astype(np.int64)
        for a in range(4):
            base = idx[:, a] * nv
            ca = self.term_coeff[:, a]
            for b in range(4):
                flat += np.bincount(
                    base + idx[:, b],
                    weights=weights * ca * self.term_coeff[:, b],
                    minlength=nv * nv,
                )
        return flat.reshape(nv, nv)


def _as_grid_function(data, domain: Ball, cells: int) -> GridFunction:
    if isinstance(data, GridFunction):
        return data
    value = float(data)
    x = np.linspace(domain.lo, domain.hi, cells + 1)
    model: ExteriorModel
    if value == 0.0:
        model = ZeroBeyond()
    else:
        model = AnalyticClosure(
            lambda y: np.full_like(np.asarray(y, dtype=float), value),
            growth=0.0,
        )
    return GridFunction(x, np.full(cells + 1, value), model)


def assemble(
    domain: Ball,
    cells: int,
    s: float,
    p: float,
    coeff: CoefficientField,
    f,
    exterior,
    truncation_factor: float = 8.0,
    growth_ratio: float = 1.15,
    validate_coefficient: bool = True,
) -> DiscreteProblem:
    """Build the discrete energy on `cells` uniform cells over `domain`.

    `f` and `exterior` may be grid functions or constants.  The
    exterior data is collocated on geometrically coarsening cells out
    to `truncation_factor` times the domain half-width; beyond that the
    kernel is integrated against the data by mapped Gauss quadrature,
    so nothing is actually discarded.
    """
    if cells < 4:
        raise OutOfRange(f"need at least 4 cells, got {cells}")
    if p <= 1:
        raise OutOfRange(f"p must exceed 1, got {p}")
    if not 0 < s < 1:
        raise OutOfRange(f"s must lie in (0, 1), got {s}")
    if validate_coefficient:
        coeff.validate(domain)

    sp = float(s) * float(p)
    L = domain.radius
    h = 2.0 * L / cells
    g = _as_grid_function(exterior, domain, cells)
    f_gf = _as_grid_function(f, domain, cells)

    # node layout: geometric exterior collar on both sides
    collar = [h]
    while sum(collar) < (truncation_factor - 1.0) * L:
        collar.append(collar[-1] * growth_ratio)
    collar = np.array(collar)
    left = domain.lo - np.cumsum(collar)[::-1]
    right = domain.hi + np.cumsum(collar)
    omega_nodes = np.linspace(domain.lo, domain.hi, cells + 1)
    nodes = np.concatenate([left, omega_nodes, right])
    ncell = len(nodes) - 1
    k_collar = len(collar)
    omega_cells = np.arange(k_collar, k_collar + cells)
    omega_slice = slice(k_collar, k_collar + cells + 1)
    in_omega = np.zeros(ncell, dtype=bool)
    in_omega[omega_cells] = True

    lo = nodes[:-1]
    hi = nodes[1:]
    widths = hi - lo
    mids = 0.5 * (lo + hi)

    idx_parts: List[np.ndarray] = []
    coeff_parts: List[np.ndarray] = []
    w_parts: List[np.ndarray] = []

    def push(idx, cf, w):
        idx_parts.append(np.asarray(idx, dtype=np.int32))
        coeff_parts.append(np.asarray(cf, dtype=float))
        w_parts.append(np.asarray(w, dtype=float))

    # ---- same-cell closed form: |slope|^p * 2 h^(beta+2)/((beta+1)(beta+2))
    beta = p - 1.0 - sp
    cells_i = omega_cells
    h_i = widths[cells_i]
    a_diag = coeff(mids[cells_i], mids[cells_i])
    s_factor = 2.0 * h_i ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))
    push(
        np.stack([cells_i + 1, cells_i, cells_i, cells_i], 1),
        np.tile([1.0, -1.0, 0.0, 0.0], (len(cells_i), 1)),
        a_diag * s_factor / h_i**p,
    )

    # ---- adjacent cells via the corner substitution
    # xi = b - x, eta = y - b, (xi, eta) = rho (tau, 1-tau):
    # contribution = 2 a int |m1 tau + m2 (1-tau)|^p P(tau)^(p-sp+1)
    #                        / (p-sp+1) dtau,
    # P(tau) = min(h1/tau, h2/(1-tau)), split at tau* = h1/(h1+h2).
    gq_x, gq_w = gauss_rule(8)
    adj_i = np.arange(ncell - 1)
    adj_i = adj_i[in_omega[adj_i] | in_omega[adj_i + 1]]
    h1 = widths[adj_i]
    h2 = widths[adj_i + 1]
    tau_star = h1 / (h1 + h2)
    a_adj = coeff(mids[adj_i], mids[adj_i + 1])
    for piece in (0, 1):
        if piece == 0:
            t0 = np.zeros_like(tau_star)
            t1 = tau_star
        else:
            t0 = tau_star
            t1 = np.ones_like(tau_star)
        halfw = 0.5 * (t1 - t0)
        mid = 0.5 * (t0 + t1)
        tau = mid[:, None] + halfw[:, None] * gq_x[None, :]  # (A, 8)
        gw = halfw[:, None] * gq_w[None, :]
        P = np.where(
            piece == 0, h2[:, None] / (1.0 - tau), h1[:, None] / tau
        )
        w = (
            2.0
            * a_adj[:, None]
            * gw
            * P ** (p - sp + 1.0)
            / (p - sp + 1.0)
        )
        c_prev = -tau / h1[:, None]
        c_next = (1.0 - tau) / h2[:, None]
        c_mid = -c_prev - c_next
        na = np.broadcast_to(adj_i[:, None], tau.shape)
        push(
            np.stack([na, na + 1, na + 2, na], -1).reshape(-1, 4),
            np.stack([c_prev, c_mid, c_next, np.zeros_like(tau)],
                     -1).reshape(-1, 4),
            w.reshape(-1),
        )

    # ---- separated cells: tensor Gauss
    g3_x, g3_w = gauss_rule(3)
    I, J = np.meshgrid(np.arange(ncell), np.arange(ncell), indexing="ij")
    mask = (J >= I + 2) & (in_omega[I] | in_omega[J])
    I = I[mask]
    J = J[mask]
    half_i = 0.5 * widths[I]
    half_j = 0.5 * widths[J]
    xa = mids[I][:, None] + half_i[:, None] * g3_x[None, :]  # (P, 3)
    yb = mids[J][:, None] + half_j[:, None] * g3_x[None, :]
    ta = (xa - lo[I][:, None]) / widths[I][:, None]
    tb = (yb - lo[J][:, None]) / widths[J][:, None]
    kernel = np.abs(xa[:, :, None] - yb[:, None, :]) ** (-1.0 - sp)
    a_sep = coeff(xa[:, :, None], yb[:, None, :])
    W = (
        2.0
        * (half_i[:, None, None] * g3_w[None, :, None])
        * (half_j[:, None, None] * g3_w[None, None, :])
        * a_sep
        * kernel
    )  # (P, 3, 3)
    P_, _, _ = W.shape
    ia = np.broadcast_to(I[:, None, None], W.shape)
    jb = np.broadcast_to(J[:, None, None], W.shape)
    ta_b = np.broadcast_to(ta[:, :, None], W.shape)
    tb_b = np.broadcast_to(tb[:, None, :], W.shape)
    push(
        np.stack([ia, ia + 1, jb, jb + 1], -1).reshape(-1, 4),
        np.stack([1.0 - ta_b, ta_b, -(1.0 - tb_b), -tb_b], -1).reshape(-1, 4),
        W.reshape(-1),
    )

    # ---- far field beyond the collar: mapped Gauss against the data,
    # via y = endpoint +/- W (1/z^2 - 1), z in (0, 1] (the squared map
    # flattens the endpoint singularity of the transformed kernel)
    n_nodes = len(nodes)
    gm_x, gm_w = gauss_rule(24)
    z01 = 0.5 * (gm_x + 1.0)
    w01 = 0.5 * gm_w
    W_map = float(nodes[-1] - nodes[0])
    stretch = 1.0 / z01**2 - 1.0
    far_y = np.concatenate(
        [nodes[0] - W_map * stretch, nodes[-1] + W_map * stretch]
    )
    far_jac = np.concatenate(
        [2.0 * W_map / z01**3 * w01, 2.0 * W_map / z01**3 * w01]
    )
    extra_values = np.asarray(g(far_y), dtype=float)
    oc = omega_cells
    xo = mids[oc][:, None] + (0.5 * widths[oc])[:, None] * g3_x[None, :]
    to = (xo - lo[oc][:, None]) / widths[oc][:, None]
    wxo = (0.5 * widths[oc])[:, None] * g3_w[None, :]
    kern_far = np.abs(xo[:, :, None] - far_y[None, None, :]) ** (-1.0 - sp)
    a_far = coeff(xo[:, :, None], far_y[None, None, :])
    Wf = 2.0 * wxo[:, :, None] * far_jac[None, None, :] * a_far * kern_far
    io = np.broadcast_to(oc[:, None, None], Wf.shape)
    to_b = np.broadcast_to(to[:, :, None], Wf.shape)
    mf = np.broadcast_to(
        np.arange(len(far_y))[None, None, :] + n_nodes, Wf.shape
    )
    push(
        np.stack([io, io + 1, mf, mf], -1).reshape(-1, 4),
        np.stack(
            [1.0 - to_b, to_b, -np.ones_like(to_b), np.zeros_like(to_b)], -1
        ).reshape(-1, 4),
        Wf.reshape(-1),
    )
    farfield_share = float(Wf.sum()) / float(
        sum(wp.sum() for wp in w_parts)
    )

    term_idx = np.concatenate(idx_parts)
    term_coeff = np.concatenate(coeff_parts)
    term_w = np.concatenate(w_parts)

    # ---- fixed values and unknowns
    fixed = np.concatenate([np.asarray(g(nodes), dtype=float),
                            extra_values])
    unknown_idx = np.arange(k_collar + 1, k_collar + cells)
    fixed[unknown_idx] = 0.0

    # ---- data term: 2 * int f phi_k over the domain, consistent mass
    load = np.zeros(n_nodes + len(far_y))
    fa = np.asarray(f_gf(nodes[omega_slice][:-1]), dtype=float)
    fb = np.asarray(f_gf(nodes[omega_slice][1:]), dtype=float)
    hh = widths[omega_cells]
    la = 2.0 * hh * (2.0 * fa + fb) / 6.0
    lb = 2.0 * hh * (fa + 2.0 * fb) / 6.0
    np.add.at(load, omega_cells, la)
    np.add.at(load, omega_cells + 1, lb)

    return DiscreteProblem(
        domain=domain, s=float(s), p=float(p), coeff=coeff, nodes=nodes,
        omega_slice=omega_slice, unknown_idx=unknown_idx,
        fixed_values=fixed, term_idx=term_idx, term_coeff=term_coeff,
        term_w=term_w, load=load, n_extra=len(far_y),
        extra_values=extra_values, farfield_share=farfield_share,
        exterior_model=AnalyticClosure(
            g.__call__, growth=_exterior_growth(g.exterior)
        ),
    )


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveResult:
    solution: GridFunction
    full_values: np.ndarray
    iterations: int
    optimality_residual: float
    energy_history: Tuple[float, ...]
    ill_conditioned: bool
    scale: float


def _direct_quadratic(problem: DiscreteProblem, unknown_idx: np.ndarray,
                      fixed: np.ndarray, load: np.ndarray) -> np.ndarray:
    A = problem.quadratic_matrix()
    sub = A[np.ix_(unknown_idx, unknown_idx)]
    v0 = fixed.copy()
    v0[unknown_idx] = 0.0
    rhs = load[unknown_idx] - (A @ v0)[unknown_idx]
    return np.linalg.solve(sub, rhs)


def _minimize(
    problem: DiscreteProblem,
    unknown_idx: np.ndarray,
    fixed: np.ndarray,
    load: np.ndarray,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, int, float, List[float], bool]:
    p = problem.p
    scale = max(
        1.0,
        float(np.abs(load).max()),
        float(np.abs(fixed).max()),
    )

    def grad_at(v: np.ndarray, smoothing: float = 0.0) -> np.ndarray:
        t = problem.differences(v)
        if smoothing > 0.0:
            gt = problem.term_w * (
                t * t + smoothing * smoothing
            ) ** (0.5 * p - 1.0) * t
        else:
            gt = problem.term_w * _signed_pow(t, p - 1.0)
        out = np.zeros(problem.n_values)
        for j in range(4):
            out += np.bincount(
                problem.term_idx[:, j],
                weights=gt * problem.term_coeff[:, j],
                minlength=problem.n_values,
            )
        return out - load

    def energy_at(v: np.ndarray, smoothing: float = 0.0) -> float:
        t = problem.differences(v)
        if smoothing > 0.0:
            # constant shifted so the smoothed energy of zero
            # differences vanishes like the true one
            per_term = (
                (t * t + smoothing * smoothing) ** (0.5 * p)
                - smoothing**p
            ) / p
            return float(problem.term_w @ per_term - load @ v)
        return float((problem.term_w @ np.abs(t) ** p) / p - load @ v)

    if abs(p - 2.0) < 1e-14:
        u = _direct_quadratic(problem, unknown_idx, fixed, load)
        v = fixed.copy()
        v[unknown_idx] = u
        resid = float(np.abs(grad_at(v)[unknown_idx]).max())
        return v, 1, resid / scale, [energy_at(v)], False

    # warm start from the quadratic surrogate of the same term set
    v = fixed.copy()
    v[unknown_idx] = _direct_quadratic(problem, unknown_idx, fixed, load)

    if p < 2.0:
        return _descend_subquadratic(
            problem, unknown_idx, fixed, load, v, tol, max_iter,
            scale, grad_at, energy_at,
        )

    # p > 2: damped Newton with Armijo backtracking (the energy is C^2)
    energies = [energy_at(v)]
    ill = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g = grad_at(v)[unknown_idx]
        resid = float(np.abs(g).max())
        if resid <= tol * scale:
            return v, iterations, resid / scale, energies, ill
        H = problem.curvature_matrix(v)
        Hs = H[np.ix_(unknown_idx, unknown_idx)]
        ridge = 1e-14 * max(1.0, float(np.trace(Hs)) / len(unknown_idx))
        Hs[np.diag_indices_from(Hs)] += ridge
        try:
            step = np.linalg.solve(Hs, -g)
        except np.linalg.LinAlgError:
            step = -g
        descent = float(g @ step)
        if descent >= 0.0:  # fall back to steepest descent
            step = -g
            descent = float(g @ step)
        alpha = 1.0
        e0 = energies[-1]
        accepted = False
        while alpha > 1e-12:
            v_try = v.copy()
            v_try[unknown_idx] += alpha * step
            e1 = energy_at(v_try)
            if e1 <= e0 + 1e-4 * alpha * descent:
                v = v_try
                energies.append(e1)
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            ill = True
            break
    g = grad_at(v)[unknown_idx]
    resid = float(np.abs(g).max())
    if resid > tol * scale:
        partial = (v, iterations, resid / scale, energies, True)
        raise NonConvergence(
            f"minimizer stalled at residual {resid:.3e} "
            f"(target {tol * scale:.3e}) after {iterations} iterations",
            partial=partial,
        )
    return v, iterations, resid / scale, energies, ill


def _descend_subquadratic(
    problem: DiscreteProblem,
    unknown_idx: np.ndarray,
    fixed: np.ndarray,
    load: np.ndarray,
    v0: np.ndarray,
    tol: float,
    max_iter: int,
    scale: float,
    grad_at,
    energy_at,
) -> Tuple[np.ndarray, int, float, List[float], bool]:
    """First-order minimization for 1 < p < 2.

    The energy is C^1 but not C^2 (|t|^(p-2) blows up at coincidence),
    so no Hessians are formed: a quasi-Newton descent runs on the
    smoothed energy with regularization 1e-8 * data scale, then again
    on the true energy as an unsmoothed polish.  Note the reachable
    optimality residual is floored near (machine epsilon)^(p-1) times
    the weight scale, because nodal rounding noise delta enters the
    gradient as |delta|^(p-1) through exactly-coinciding pairs; pass a
    tolerance compatible with that floor.
    """
    eps_reg = 1e-8 * scale
    energies: List[float] = [energy_at(v0)]
    ill = False
    iterations = 0
    x = v0[unknown_idx].copy()

    def pack(x: np.ndarray) -> np.ndarray:
        v = fixed.copy()
        v[unknown_idx] = x
        return v

    for smoothing in (eps_reg, 0.0):
        def objective(x, _e=smoothing):
            v = pack(x)
            return energy_at(v, _e), grad_at(v, _e)[unknown_idx]

        res = sopt.minimize(
            objective,
            x,
            jac=True,
            method="L-BFGS-B",
            callback=lambda xk: energies.append(energy_at(pack(xk))),
            options={
                "maxiter": max_iter,
                "maxcor": 20,
                "ftol": 0.0,
                "gtol": 0.25 * tol * scale,
            },
        )
        x = res.x
        iterations += int(res.nit)
        if "ABNORMAL" in str(res.message).upper():
            ill = True

    v = pack(x)
    resid = float(np.abs(grad_at(v)[unknown_idx]).max())
    if resid > tol * scale:
        partial = (v, iterations, resid / scale, energies, True)
        raise NonConvergence(
            f"descent stalled at residual {resid:.3e} "
            f"(target {tol * scale:.3e}) after {iterations} iterations; "
            f"for p < 2 the float64 floor is about "
            f"{scale * np.finfo(float).eps ** (problem.p - 1.0):.1e}",
            partial=partial,
        )
    return v, iterations, resid / scale, energies, ill


def _result_from_values(problem: DiscreteProblem, v: np.ndarray,
                        iterations: int, resid: float,
                        energies: List[float], ill: bool) -> SolveResult:
    xs = problem.nodes[problem.omega_slice]
    solution = GridFunction(xs, v[problem.omega_slice.start:
                                  problem.omega_slice.stop],
                           problem.exterior_model)
    return SolveResult(
        solution=solution, full_values=v, iterations=iterations,
        optimality_residual=resid, energy_history=tuple(energies),
        ill_conditioned=ill,
        scale=max(1.0, float(np.abs(problem.load).max())),
    )


def solve(problem: DiscreteProblem, tol: float = 1e-9,
          max_iter: int = 500) -> SolveResult:
    """Minimize the assembled energy over the domain-interior nodes."""
    v, it, resid, energies, ill = _minimize(
        problem, problem.unknown_idx, problem.fixed_values, problem.load,
        tol, max_iter,
    )
    return _result_from_values(problem, v, it, resid, energies, ill)


def harmonic_replacement(problem: DiscreteProblem,
                         base_values: np.ndarray, ball: Ball,
                         tol: float = 1e-9,
                         max_iter: int = 500) -> SolveResult:
    """Homogeneous Dirichlet solve inside `ball`, data from base_values.

    Stationarity of the energy restricted to pairs meeting the ball is
    the same as stationarity of the full term set with test directions
    supported in the ball, so the assembled terms are reused as-is with
    a smaller unknown set and no data term.
    """
    xs = problem.nodes
    inside = (xs > ball.lo) & (xs < ball.hi)
    inside_idx = np.where(inside)[0]
    allowed = set(problem.unknown_idx.tolist())
    unknown = np.array(
        [i for i in inside_idx if i in allowed], dtype=np.int64
    )
    if len(unknown) < 2:
        raise OutOfRange(
            f"replacement ball {ball} contains {len(unknown)} interior "
            "nodes; refine the mesh"
        )
    fixed = base_values.copy()
    fixed[unknown] = 0.0
    zero_load = np.zeros_like(problem.load)
    v, it, resid, energies, ill = _minimize(
        problem, unknown, fixed, zero_load, tol, max_iter,
    )
    return _result_from_values(problem, v, it, resid, energies, ill)


def weak_residual(problem: DiscreteProblem, values: np.ndarray,
                  node_idx: np.ndarray, homogeneous: bool = False) -> float:
    """Max nodal first-variation of the energy over the given nodes."""
    g = problem.gradient(values)
    if homogeneous:
        g = g + problem.load
    return float(np.abs(g[node_idx]).max())


# --------------------------------------------------------------------------
# frozen-coefficient inhomogeneity
# --------------------------------------------------------------------------


def induced_inhomogeneity(
    v: GridFunction,
    coeff: CoefficientField,
    x_o: float,
    R: float,
    p: float,
    s: float,
    gauss_order: int = 6,
) -> GridFunction:
    """Data the frozen-coefficient solution satisfies on B_{R/2}(x_o).

    g(x) = 2 * integral over |y - x_o| > R of
        ((a)_R - a(x,y)) / (a)_R
        * |v(x)-v(y)|^(p-2) (v(x)-v(y)) |x-y|^(-1-sp) dy,
    finite because |x - y| >= R/2 there.  Evaluated at the nodes of v
    inside B_{R/2} by cell-aligned Gauss quadrature plus mapped Gauss
    on the exterior closure.
    """
    sp = float(s) * float(p)
    avg = frozen_average(coeff, x_o, R)
    xs = v.x[np.abs(v.x - x_o) < 0.5 * R]
    if len(xs) == 0:
        raise OutOfRange("no nodes of v inside the half ball")

    # y-cells of v outside the ball
    cells_lo = v.x[:-1]
    cells_hi = v.x[1:]
    keep = (cells_hi <= x_o - R) | (cells_lo >= x_o + R)
    # clip partially covered cells to the exterior of the ball
    part_l = (cells_lo < x_o - R) & (cells_hi > x_o - R)
    part_r = (cells_lo < x_o + R) & (cells_hi > x_o + R)
    seg_lo = np.concatenate([cells_lo[keep], cells_lo[part_l],
                             np.full(part_r.sum(), x_o + R)])
    seg_hi = np.concatenate([cells_hi[keep],
                             np.full(part_l.sum(), x_o - R),
                             cells_hi[part_r]])
    gx, gw = gauss_rule(gauss_order)
    ym = 0.5 * (seg_lo + seg_hi)[:, None] + 0.5 * (
        seg_hi - seg_lo
    )[:, None] * gx[None, :]
    yw = 0.5 * (seg_hi - seg_lo)[:, None] * gw[None, :]
    ym = ym.ravel()
    yw = yw.ravel()
    vy = v(ym)

    # mapped Gauss beyond the grid of v on both sides,
    # via y = endpoint +/- W (1/z^2 - 1), z in (0, 1]
    gm_x, gm_w = gauss_rule(24)
    z01 = 0.5 * (gm_x + 1.0)
    w01 = 0.5 * gm_w
    T_r = max(float(v.x[-1]), x_o + R)
    T_l = min(float(v.x[0]), x_o - R)
    W_map = max(T_r - T_l, R)
    stretch = 1.0 / z01**2 - 1.0
    y_far = np.concatenate(
        [T_r + W_map * stretch, T_l - W_map * stretch]
    )
    jac_far = np.concatenate(
        [2.0 * W_map / z01**3 * w01, 2.0 * W_map / z01**3 * w01]
    )
    v_far = v(y_far)

    y_all = np.concatenate([ym, y_far])
    w_all = np.concatenate([yw, jac_far])
    v_all = np.concatenate([vy, v_far])

    out = np.empty(len(xs))
    for i, x in enumerate(xs):
        vx = float(v(np.array([x]))[0])
        d = vx - v_all
        mismatch = (avg - coeff(np.full_like(y_all, x), y_all)) / avg
        integrand = (
            mismatch
            * _signed_pow(d, p - 1.0)
            * np.abs(x - y_all) ** (-1.0 - sp)
        )
        out[i] = 2.0 * float(w_all @ integrand)
    return GridFunction(xs, out, ZeroBeyond())


# --------------------------------------------------------------------------
# closed-form fixture and comparison experiment
# --------------------------------------------------------------------------


def bulge_data_constant(s: float) -> float:
    """Constant f for which (1 - x^2)_+^s solves the p = 2 problem.

    The order-2s operator (without normalizing constant) applied to
    (1 - x^2)_+^s is the constant Gamma(s) Gamma(1-s) = pi / sin(pi s)
    on (-1, 1); with the factor-2 weak form this is exactly the datum.
    """
    if not 0 < s < 1:
        raise OutOfRange(f"s must lie in (0, 1), got {s}")
    return math.pi / math.sin(math.pi * s)


@dataclass(frozen=True)
class ComparisonRow:
    R: float
    lhs_lp: float  # R^(-sp) int_{B_R} |u - v|^p
    lhs_seminorm: float  # [u - v]^p of order s
    rhs_f_term: float  # R^((1-s+eps)p) ||f||_{L^{a~p}(B_R)}^{p'}
    rhs_chi_term: Optional[float]  # R^(chi p/(p-1)) [u]^p (variable a)
    replacement_residual: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[ComparisonRow, ...]
    fitted_slope: float
    base_exponent: float  # (1 - s + eps) p
    prefactor_exponent: float  # fitted R-slope of the f-norm factor
    target_slope: float  # base_exponent + prefactor_exponent
    epsilon: float


def comparison_experiment(
    domain: Ball,
    cells: int,
    s: float,
    p: float,
    coeff: CoefficientField,
    f,
    R_sequence: Sequence[float],
    a_tilde: float = 1.0,
    center: float = 0.0,
    tol: float = 1e-10,
) -> ComparisonReport:
    """Solve u globally, replace it harmonically on each B_R, and
    compare the replacement error against the datum term's scaling."""
    params = derive(1, p, s)
    eps = float(epsilon_gain(params, a_tilde))
    sp = float(s) * float(p)
    p_prime = p / (p - 1.0)

    problem = assemble(domain, cells, s, p, coeff, f, 0.0)
    base = solve(problem, tol=tol)
    u_vals = base.full_values
    u_gf = base.solution
    f_gf = _as_grid_function(f, domain, cells)

    rows: List[ComparisonRow] = []
    f_factors: List[float] = []
    for R in R_sequence:
        ball = Ball(center, float(R))
        if not (domain.lo < ball.lo and ball.hi < domain.hi):
            raise OutOfRange(f"replacement ball {ball} leaves the domain")
        rep = harmonic_replacement(problem, u_vals, ball, tol=tol)
        w_vals = u_vals[problem.omega_slice.start:problem.omega_slice.stop] \
            - rep.full_values[problem.omega_slice.start:
                              problem.omega_slice.stop]
        w_gf = GridFunction(u_gf.x, w_vals, ZeroBeyond())
        lhs_lp = float(R) ** (-sp) * lp_norm(w_gf, ball, p) ** p
        lhs_semi = supported_seminorm_power(w_gf, p, s)
        f_norm_factor = lp_norm(f_gf, ball, a_tilde * p) ** p_prime
        rhs_f = float(R) ** ((1.0 - s + eps) * p) * f_norm_factor
        rhs_chi = None
        if coeff.chi is not None:
            rhs_chi = float(R) ** (coeff.chi * p / (p - 1.0)) * \
                gagliardo_seminorm(u_gf, ball, s, p)
        resid = weak_residual(
            problem, rep.full_values,
            np.where((problem.nodes > ball.lo) & (problem.nodes < ball.hi))[0],
            homogeneous=True,
        )
        rows.append(ComparisonRow(
            R=float(R), lhs_lp=lhs_lp, lhs_seminorm=lhs_semi,
            rhs_f_term=rhs_f, rhs_chi_term=rhs_chi,
            replacement_residual=resid,
        ))
        f_factors.append(f_norm_factor)

    Rs = np.array([row.R for row in rows])
    lhs = np.array([row.lhs_lp for row in rows])
    if np.any(lhs <= 0):
        raise DegenerateFit(
            "replacement error vanished; cannot fit a slope (f = 0?)"
        )
    fitted = float(np.polyfit(np.log(Rs), np.log(lhs), 1)[0])
    pref = float(np.polyfit(np.log(Rs), np.log(np.array(f_factors)), 1)[0])
    base_e = (1.0 - s + eps) * p
    return ComparisonReport(
        rows=tuple(rows), fitted_slope=fitted, base_exponent=base_e,
        prefactor_exponent=pref, target_slope=base_e + pref, epsilon=eps,
    )
