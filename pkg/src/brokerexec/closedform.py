"""Closed-form trajectories without execution risk and without terminal residue.

All formulas depend on the parameters only through kappa = sqrt(theta sigma^2 / 2 eta)
and the drift shift mu / (theta sigma^2); ``m0`` and ``beta`` are not used
(the trajectories correspond to m0 = 0 and a forbidden terminal block).
Hyperbolic ratios are written with exp/expm1 so they stay finite for any kappa T.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DomainError
from .kernels.quadrature import kernel_integral
from .params import ModelParams, derive
from .refstrat import PiecewiseConstant, RefStrategy

DEFAULT_QUAD = 2000


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: np.ndarray
    x: np.ndarray
    meta: str = ""
    v: np.ndarray | None = None


@dataclass(frozen=True)
class BasisWeights:
    is_weight: float
    tc_weight: float
    offset: float

    def reconstruct(self, kappa, T, t):
        return self.offset + self.is_weight * unit_is(kappa, T, t) + self.tc_weight * unit_tc(kappa, T, t)


class OvershootClass(enum.Enum):
    OVERSHOOT = "overshoot"
    UNDERSHOOT = "undershoot"
    MONOTONE = "monotone"


def _check_t(T, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise DomainError(f"t must lie in [0, {T}]")
    return t


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def sinh_ratio(kappa, T, u):
    """sinh(kappa u) / sinh(kappa T) for 0 <= u <= T, overflow free."""
    u = np.asarray(u, dtype=float)
    if kappa == 0:
        return u / T
    return np.exp(-kappa * (T - u)) * np.expm1(-2.0 * kappa * u) / np.expm1(-2.0 * kappa * T)


def unit_is(kappa: float, T: float, t):
    """sinh(kappa (T - t)) / sinh(kappa T)."""
    t = _check_t(T, t)
    return _out(sinh_ratio(kappa, T, T - t))


def unit_tc(kappa: float, T: float, t):
    """(sinh(kappa T) - sinh(kappa t)) / sinh(kappa T)."""
    t = _check_t(T, t)
    return _out(1.0 - sinh_ratio(kappa, T, t))


def _kappa_shift(p: ModelParams):
    c = derive(p)
    return c.kappa, c.merton_shift


def trajectory_general(p: ModelParams, R: RefStrategy, grid, n_quad: int = DEFAULT_QUAD) -> Trajectory:
    """Optimal path for a general reference strategy via the Green's-kernel integral."""
    kappa, shift = _kappa_shift(p)
    t = _check_t(p.T, grid)
    br, r0, r1 = R.segments()
    K = kernel_integral(t, br, r0, r1, kappa, p.T, n_quad)
    x = K + (p.x0 - shift) * sinh_ratio(kappa, p.T, p.T - t) + p.A + (shift - p.A) * (1.0 - sinh_ratio(kappa, p.T, t))
    x = np.where(t == 0, p.x0, np.where(t == p.T, p.A, x))
    return Trajectory(t, x, "kernel")


def kernel_of_ones(kappa: float, T: float, grid, n_quad: int = DEFAULT_QUAD):
    """Kernel integral with R = 1; equals TC_t - IS_t."""
    t = np.asarray(grid, dtype=float)
    return kernel_integral(t, np.array([0.0, T]), np.ones(1), np.ones(1), kappa, T, n_quad)


def _lin_sinh_integral(lo, hi, alpha, beta, k, s0):
    """int_lo^hi (alpha + beta s) sinh(k (s - s0)) ds, exact."""
    def F(s):
        return (alpha + beta * s) * np.cosh(k * (s - s0)) / k - beta * np.sinh(k * (s - s0)) / k ** 2
    return F(hi) - F(lo)


def trajectory_affine(p: ModelParams, R: RefStrategy, grid) -> Trajectory:
    """The same optimal path written as shift + a_t IS_t + b_t sinh(kt)/sinh(kT).

    a_t and b_t are integrals of R against sinh, evaluated exactly on each
    linear piece of R. Plain hyperbolics are used, so kappa T must stay
    below about 350.
    """
    kappa, shift = _kappa_shift(p)
    if kappa * p.T > 350:
        raise DomainError("affine form limited to kappa*T <= 350")
    T = p.T
    t = _check_t(T, grid)
    br, r0, r1 = R.segments()
    slope = (r1 - r0) / np.diff(br)
    icpt = r0 - slope * br[:-1]
    whole_a = kappa * _lin_sinh_integral(br[:-1], br[1:], icpt, slope, kappa, 0.0)
    whole_b = kappa * _lin_sinh_integral(br[:-1], br[1:], icpt, slope, -kappa, T)
    cum_a = np.concatenate([[0.0], np.cumsum(whole_a)])
    cum_b = np.concatenate([np.cumsum(whole_b[::-1])[::-1], [0.0]])
    j = np.clip(np.searchsorted(br, t, side="right") - 1, 0, len(r0) - 1)
    part_a = kappa * _lin_sinh_integral(br[j], t, icpt[j], slope[j], kappa, 0.0)
    part_b = kappa * _lin_sinh_integral(t, br[j + 1], icpt[j], slope[j], -kappa, T)
    a_t = p.x0 - shift + cum_a[j] + part_a
    b_t = p.A - shift + cum_b[j + 1] + part_b
    x = shift + (a_t * np.sinh(kappa * (T - t)) + b_t * np.sinh(kappa * t)) / np.sinh(kappa * T)
    return Trajectory(t, x, "affine")


def endpoint_weights(p: ModelParams, R_level: float) -> BasisWeights:
    _, shift = _kappa_shift(p)
    return BasisWeights(is_weight=p.x0 - shift - R_level,
                        tc_weight=-p.A + shift + R_level,
                        offset=p.A)


def trajectory_endpoints_only(p: ModelParams, R_level: float, grid):
    """Optimal path for a constant reference level: an affine mix of unit IS and TC."""
    kappa, _ = _kappa_shift(p)
    t = _check_t(p.T, grid)
    w = endpoint_weights(p, R_level)
    x = w.reconstruct(kappa, p.T, t)
    x = np.where(t == 0, p.x0, np.where(t == p.T, p.A, x))
    return Trajectory(t, x, "endpoints"), w


def overshoot_classify(p: ModelParams, R_level: float) -> OvershootClass:
    """Classify the constant-level optimal path.

    Overshoot: the path first moves away from the target beyond x0.
    Undershoot: the path crosses the target before returning to it.
    Buy programs (x0 < A) are mirrored onto sell programs first.
    """
    if p.x0 == p.A:
        raise DegenerateError("x0 == A: nothing to trade")
    kappa, shift = _kappa_shift(p)
    level = R_level + shift
    x0, A = p.x0, p.A
    if x0 < A:
        x0, A, level = -x0, -A, -level
    # cosh(kT) - 1 = 2 sinh^2(kT/2); the margin vanishes as kT grows
    half = 0.5 * kappa * p.T
    if half > 350:
        margin = 0.0
    else:
        margin = (x0 - A) / (2.0 * math.sinh(half) ** 2)
    if level > x0 + margin:
        return OvershootClass.OVERSHOOT
    if level < A - margin:
        return OvershootClass.UNDERSHOOT
    return OvershootClass.MONOTONE


def _logsinh(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        small = np.log(np.sinh(np.minimum(x, 20.0)))
    big = x - math.log(2.0) + np.log1p(-np.exp(-2.0 * np.maximum(x, 20.0)))
    return np.where(x > 20.0, big, small)


def piecewise_weights(kappa: float, T: float, n: int) -> np.ndarray:
    """Matrix W with a = W @ [x0, R1, ..., Rn, A] for the knot values a_0..a_n.

    Interior rows hold the weights sinh(k(T - t_k)) b_i / sinh(kT) and
    sinh(k t_k) b_{n-i+1} / sinh(kT) with b_0 = 1 and
    b_i = cosh(k i h) - cosh(k (i-1) h) = 2 sinh(k (i - 1/2) h) sinh(k h / 2).
    Each row sums to one.
    """
    if n < 1:
        raise DomainError("n >= 1 required")
    h = T / n
    W = np.zeros((n + 1, n + 2))
    W[0, 0] = 1.0
    W[n, n + 1] = 1.0
    if n == 1:
        return W
    i = np.arange(1, n)
    logb = np.concatenate([[0.0], math.log(2.0) + _logsinh(kappa * (i - 0.5) * h) + _logsinh(0.5 * kappa * h)])
    ls_T = _logsinh(kappa * T)
    for k in range(1, n):
        left = _logsinh(kappa * (T - k * h)) - ls_T
        right = _logsinh(kappa * k * h) - ls_T
        # first sum: i = 0..k with b_i
        W[k, : k + 1] = np.exp(left + logb[: k + 1])
        # second sum: i = k+1..n+1 with b_{n-i+1}
        idx = np.arange(k + 1, n + 2)
        W[k, k + 1:] = np.exp(right + logb[n - idx + 1])
    return W


def piecewise_knots(p: ModelParams, levels) -> np.ndarray:
    """Knot values a_0..a_n of the optimal path for a piecewise-constant reference."""
    if p.mu != 0:
        raise DomainError("piecewise closed form requires mu = 0; use trajectory_general")
    kappa, _ = _kappa_shift(p)
    levels = np.asarray(levels, dtype=float)
    n = levels.size
    W = piecewise_weights(kappa, p.T, n)
    a = W @ np.concatenate([[p.x0], levels, [p.A]])
    a[0], a[-1] = p.x0, p.A
    return a


def trajectory_piecewise(p: ModelParams, levels, grid) -> Trajectory:
    """Piecewise IS/TC reconstruction on each sub-interval of length T/n."""
    levels = np.asarray(levels, dtype=float)
    kappa, _ = _kappa_shift(p)
    a = piecewise_knots(p, levels)
    n = levels.size
    T = p.T
    h = T / n
    t = _check_t(T, grid)
    k = np.clip(np.floor(t / h).astype(int), 0, n - 1)  # zero-based interval
    s = np.clip(t - k * h, 0.0, h)
    IS = sinh_ratio(kappa, h, h - s)
    TC = 1.0 - sinh_ratio(kappa, h, s)
    Rk = levels[k]
    x = a[k + 1] + (Rk - a[k + 1]) * TC + (a[k] - Rk) * IS
    return Trajectory(t, x, "piecewise")


def approx_bound(kappa: float, epsilon: float) -> float:
    """Sup-norm bound 0.5 sqrt(kappa eps) between optimal paths of L2-close references."""
    if epsilon < 0:
        raise DomainError("epsilon >= 0 required")
    return 0.5 * math.sqrt(kappa * epsilon)


def euler_lagrange_residual(p: ModelParams, R: RefStrategy, traj: Trajectory) -> np.ndarray:
    """x'' - kappa^2 (x - R - shift) by centred differences on a uniform grid.

    Points whose stencil touches a knot of R are returned as NaN.
    """
    kappa, shift = _kappa_shift(p)
    t, x = traj.grid, traj.x
    h = t[1] - t[0]
    d2 = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / h ** 2
    res = d2 - kappa ** 2 * (x[1:-1] - R.eval(t[1:-1]) - shift)
    knots = R.knots
    if knots.size:
        near = np.any(np.abs(t[1:-1, None] - knots[None, :]) <= h * (1 + 1e-9), axis=1)
        res = np.where(near, np.nan, res)
    return res


def default_grid(T: float, n: int = 1001) -> np.ndarray:
    return np.linspace(0.0, T, n)


def as_piecewise(R: RefStrategy) -> PiecewiseConstant:
    if not isinstance(R, PiecewiseConstant):
        raise DomainError("a piecewise-constant reference is required")
    return R
