"""Coefficient functions of the quadratic-exponential value function.

The risk-averse value function has the form

    V(t, x) = (1/theta) (1 - exp{(b2 + theta gamma/2)(x-A)^2 + b1 (x-A) + b0}).

b2 has a closed form (a shifted coth), b1 solves a linear terminal-value
ODE driven by the reference strategy, and b0 is a time integral of both.
The risk-neutral case has its own closed-form quadratic value function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NonFiniteError
from .kernels.ode import rk4_linear_backward
from .params import DerivedConstants, Mode, ModelParams, derive, validate
from .refstrat import RefStrategy

DEFAULT_GRID = 2001
_EXP_MAX = 709.0


def _check_ref(p: ModelParams, R: RefStrategy):
    if abs(R.T - p.T) > 1e-12 * max(1.0, p.T):
        raise DomainError(f"reference strategy horizon {R.T} differs from T={p.T}")


# ---------------------------------------------------------------------------
# grid


def riccati_grid(p: ModelParams, c: DerivedConstants, R: RefStrategy | None = None,
                 n_grid: int = DEFAULT_GRID) -> np.ndarray:
    """Time grid graded geometrically towards T.

    b2 behaves like H / (delta + T - t) near the horizon with
    delta = A0 / c, so spacing proportional to the distance from T + delta
    keeps the relative resolution uniform. Knots of R are inserted so the
    RK4 steps never straddle a jump of the forcing term.
    """
    if n_grid < 16:
        raise DomainError("n_grid >= 16 required")
    T = p.T
    delta = max(c.A0 / c.c, 1e-3 * T)
    u = np.linspace(0.0, 1.0, n_grid)
    L = math.log1p(T / delta)
    t = T - delta * np.expm1(L * (1.0 - u))
    t[0] = 0.0
    t[-1] = T
    if R is None:
        return t
    knots = R.knots
    if knots.size == 0:
        return t
    tol = 1e-9 * T
    keep = np.ones(t.size, dtype=bool)
    for k in knots:
        keep &= np.abs(t - k) > tol
    keep[0] = keep[-1] = True
    t = np.union1d(t[keep], knots)
    # every piece needs at least two steps
    marks = np.concatenate([[0.0], knots, [T]])
    extra = []
    for lo, hi in zip(marks[:-1], marks[1:]):
        inside = np.count_nonzero((t > lo) & (t < hi))
        if inside == 0:
            extra.append(0.5 * (lo + hi))
    if extra:
        t = np.union1d(t, extra)
    return t


# ---------------------------------------------------------------------------
# b2


def b2_at(c: DerivedConstants, p: ModelParams, t):
    """Closed-form b2(t) = sqrt(l1) coth(A0 + c (T - t)) - l3."""
    t_arr = np.asarray(t, dtype=float)
    tau = p.T - t_arr
    arg = c.A0 + c.c * tau
    with np.errstate(divide="ignore"):
        out = math.sqrt(c.l1) / np.tanh(arg) - c.l3
    if not p.no_terminal_block:
        out = np.where(tau == 0, p.theta * (2.0 * p.beta - p.gamma) / 2.0, out)
    return float(out) if out.ndim == 0 else out


def _q(c: DerivedConstants, p: ModelParams, t):
    """(b2 + l3) / H = c coth(A0 + c (T - t)); +inf at T when A0 = 0."""
    with np.errstate(divide="ignore"):
        return c.c / np.tanh(c.A0 + c.c * (p.T - np.asarray(t, dtype=float)))


def _forcing(c: DerivedConstants, p: ModelParams, Rv, b2v):
    coef = p.eta * p.theta ** 2 * p.sigma / c.H
    inner = p.theta * p.sigma + 0.5 * p.m0 ** 2 * p.theta ** 2 * p.eta * p.sigma * (1 - p.rho ** 2)
    dev = Rv - p.A
    if p.rho * p.m0 != 0:
        inner = inner - p.rho * p.m0 * b2v
    return p.theta * p.mu + coef * dev * inner


# ---------------------------------------------------------------------------
# b1


def _b1_coefficients(c, p, R, t):
    lo, hi = t[:-1], t[1:]
    mid = 0.5 * (lo + hi)
    Ra, Rm, Rb = R.piece_values(lo, hi)
    qa, qm, qb = _q(c, p, lo), _q(c, p, mid), _q(c, p, hi)
    fa = _forcing(c, p, Ra, b2_at(c, p, lo))
    fm = _forcing(c, p, Rm, b2_at(c, p, mid))
    fb = np.empty_like(fa)
    fb[:-1] = _forcing(c, p, Rb[:-1], b2_at(c, p, hi[:-1]))
    if p.no_terminal_block:
        # b2 is infinite at T; the forcing only needs R there
        fb[-1] = _forcing(c, p, Rb[-1], 0.0)
        qb = qb.copy()
        qb[-1] = 0.0
    else:
        fb[-1] = _forcing(c, p, Rb[-1], b2_at(c, p, hi[-1]))
    return qa, qm, qb, fa, fm, fb


def solve_b1(c: DerivedConstants, p: ModelParams, R: RefStrategy, grid: np.ndarray) -> np.ndarray:
    """Backward RK4 for b1' = q b1 + F with b1(T) = 0 on ``grid``.

    Without a terminal block trade, q ~ 1/(T - t) at T and the exact
    terminal slope is F(T-)/2, which is used as the first RK4 stage.
    """
    _check_ref(p, R)
    t = np.ascontiguousarray(grid, dtype=float)
    if p.no_terminal_block and p.rho * p.m0 != 0:
        raise NonFiniteError("b1 forcing is unbounded at T when beta is infinite and rho*m0 != 0")
    qa, qm, qb, fa, fm, fb = _b1_coefficients(c, p, R, t)
    k1_end = 0.5 * fb[-1] if p.no_terminal_block else math.nan
    for arr in (qa, qm, fa, fm, fb):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("b1 coefficients are not finite inside the grid")
    y = rk4_linear_backward(t, qa, qm, qb, fa, fm, fb, 0.0, k1_end)
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("b1 integration produced non-finite values")
    return y


def b1_quadrature(c: DerivedConstants, p: ModelParams, R: RefStrategy, t: float) -> float:
    """Integrating-factor representation of b1, evaluated by adaptive quadrature.

    b1(t) = -(1/phi(t)) int_t^T phi(s) F(s) ds with phi(s) = sinh(A0 + c (T - s)).
    Independent of the RK4 path; used as a reference in checks.
    """
    T = p.T
    if t >= T:
        return 0.0
    phi_t = math.sinh(c.A0 + c.c * (T - t))

    def integrand(s):
        Rv = float(R.eval(min(max(s, 0.0), T)))
        b2v = 0.0 if (p.no_terminal_block and s >= T) else float(b2_at(c, p, s))
        # scale by phi(t) inside to keep magnitudes moderate for large c T
        return math.sinh(c.A0 + c.c * (T - s)) / phi_t * float(_forcing(c, p, Rv, b2v))

    pts = [k for k in R.knots if t < k < T]
    val, _ = quad(integrand, t, T, points=pts or None, epsabs=1e-15, epsrel=1e-13, limit=500)
    return -val


# ---------------------------------------------------------------------------
# solution object


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    params: ModelParams
    constants: DerivedConstants
    R: RefStrategy
    grid: np.ndarray
    b2: np.ndarray
    b1: np.ndarray
    _meta: dict = field(default_factory=dict, repr=False)

    @cached_property
    def _b1_interp(self):
        return PchipInterpolator(self.grid, self.b1, extrapolate=False)

    @cached_property
    def _b1_slopes(self):
        """One-sided b1' per interval at (start, end) from the ODE itself."""
        c, p = self.constants, self.params
        qa, qm, qb, fa, fm, fb = _b1_coefficients(c, p, self.R, self.grid)
        y = self.b1
        da = qa * y[:-1] + fa
        db = qb * y[1:] + fb
        if p.no_terminal_block:
            db[-1] = 0.5 * fb[-1]
        return da, db

    def b1_at(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.params.T):
            raise DomainError("t outside [0, T]")
        out = self._b1_interp(t_arr)
        return float(out) if np.ndim(out) == 0 else out

    def b2_at(self, t):
        return b2_at(self.constants, self.params, t)

    def _b0_integrand(self, t, Rv, b1v, b2v):
        c, p = self.constants, self.params
        dev = Rv - p.A
        out = ((c.l1 - c.l3 ** 2) / c.H * dev ** 2
               + (p.theta * p.mu + c.l3 * b1v / c.H) * dev
               - b1v ** 2 / (4.0 * c.H)
               - p.rho * p.m0 * p.theta * p.sigma)
        if p.m0 != 0:
            out = out + p.m0 ** 2 * (b2v + p.theta * p.gamma / 2.0)
        return out

    @cached_property
    def _b0_cumulative(self):
        p = self.params
        if p.no_terminal_block and p.m0 != 0:
            raise NonFiniteError("b0 diverges: execution risk with a forbidden terminal block")
        t = self.grid
        lo, hi = t[:-1], t[1:]
        h = hi - lo
        mid = 0.5 * (lo + hi)
        Ra, Rm, Rb = self.R.piece_values(lo, hi)
        da, db = self._b1_slopes
        y = self.b1
        # cubic Hermite midpoint with exact ODE slopes keeps Simpson fourth order
        b1m = 0.5 * (y[:-1] + y[1:]) + h * (da - db) / 8.0
        b2a = b2_at(self.constants, p, lo)
        b2m = b2_at(self.constants, p, mid)
        b2b = b2_at(self.constants, p, hi)
        ga = self._b0_integrand(lo, Ra, y[:-1], b2a)
        gm = self._b0_integrand(mid, Rm, b1m, b2m)
        gb = self._b0_integrand(hi, Rb, y[1:], b2b)
        pieces = h / 6.0 * (ga + 4.0 * gm + gb)
        cum = np.zeros(t.size)
        cum[:-1] = np.cumsum(pieces[::-1])[::-1]
        return cum

    @property
    def b0(self) -> np.ndarray:
        return self._b0_cumulative

    def b0_at(self, t):
        """b0 via the cached node values plus Simpson on the partial interval."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        p = self.params
        if np.any(t_arr < 0) or np.any(t_arr > p.T):
            raise DomainError("t outside [0, T]")
        cum = self._b0_cumulative
        g = self.grid
        j = np.clip(np.searchsorted(g, t_arr, side="right"), 1, g.size - 1)
        nxt = g[j]
        out = cum[j].copy()
        part = nxt > t_arr
        if np.any(part):
            a, b = t_arr[part], nxt[part]
            m = 0.5 * (a + b)
            Ra, Rm, Rb = self.R.piece_values(a, b)
            vals = []
            for s, Rv in ((a, Ra), (m, Rm), (b, Rb)):
                vals.append(self._b0_integrand(s, Rv, self._b1_interp(s),
                                               b2_at(self.constants, p, s)))
            out[part] += (b - a) / 6.0 * (vals[0] + 4.0 * vals[1] + vals[2])
        return float(out[0]) if np.ndim(t) == 0 else out

    def value_exponent(self, t, x):
        p = self.params
        dev = np.asarray(x, dtype=float) - p.A
        t_arr = np.asarray(t, dtype=float)
        b2v = self.b2_at(t_arr)
        if p.no_terminal_block and np.any(t_arr == p.T):
            raise NonFiniteError("value function undefined at T without a terminal block trade")
        return (b2v + p.theta * p.gamma / 2.0) * dev ** 2 + self.b1_at(t_arr) * dev + self.b0_at(t_arr)


@dataclass(frozen=True)
class ValueResult:
    value: np.ndarray | float
    exponent: np.ndarray | float
    saturated: np.ndarray | bool


def solve(p: ModelParams, R: RefStrategy, n_grid: int = DEFAULT_GRID) -> RiccatiSolution:
    """Validate, derive constants, build the grid and solve for b2 and b1."""
    validate(p, Mode.RISK_AVERSE)
    _check_ref(p, R)
    c = derive(p)
    grid = riccati_grid(p, c, R, n_grid)
    b2 = b2_at(c, p, grid)
    b1 = solve_b1(c, p, R, grid)
    return RiccatiSolution(params=p, constants=c, R=R, grid=grid, b2=b2, b1=b1)


def value_function(sol: RiccatiSolution, t, x) -> ValueResult:
    """V(t, x) computed exponent first; exponents above ~709 saturate to -inf."""
    e = np.asarray(sol.value_exponent(t, x), dtype=float)
    sat = e > _EXP_MAX
    with np.errstate(over="ignore"):
        v = np.where(sat, -np.inf, -np.expm1(np.minimum(e, _EXP_MAX)) / sol.params.theta)
    if v.ndim == 0:
        return ValueResult(float(v), float(e), bool(sat))
    return ValueResult(v, e, sat)


def b2_residual(sol: RiccatiSolution) -> np.ndarray:
    """Relative residual of b2 against its Riccati ODE at interior grid points.

    Uses second-order finite differences on the (non-uniform) grid.
    """
    c = sol.constants
    t, b2 = sol.grid, sol.b2
    if sol.params.no_terminal_block:
        t, b2 = t[:-1], b2[:-1]
    d = np.gradient(b2, t, edge_order=2)
    rhs = ((b2 + c.l3) ** 2 - c.l1) / c.H
    return (np.abs(d - rhs) / (1.0 + np.abs(rhs)))[1:-1]


# ---------------------------------------------------------------------------
# risk neutral


@dataclass(frozen=True, eq=False)
class RiskNeutralSolution:
    params: ModelParams
    R: RefStrategy
    alpha: float
    grid: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def a_at(self, t):
        p = self.params
        return -p.eta / (p.T - np.asarray(t, float) + self.alpha) - p.gamma / 2.0

    def b_at(self, t):
        p, al = self.params, self.alpha
        s = p.T - np.asarray(t, float) + al
        return p.mu / 2.0 * s - (0.5 * p.mu * al ** 2 - 2.0 * p.A * p.eta) / s + p.gamma * p.A

    def c_at(self, t):
        p, al = self.params, self.alpha
        t = np.asarray(t, float)
        tau = p.T - t
        s = tau + al
        drift = -p.mu ** 2 * al ** 3 / (16.0 * p.eta) * (al / s + 2.0 * s / al - s ** 3 / (3.0 * al ** 3) - 8.0 / 3.0)
        out = (-p.m0 ** 2 * p.eta * np.log(s / al)
               + (p.rho * p.sigma * p.m0 - 0.5 * p.gamma * p.m0 ** 2) * tau
               + drift
               - (p.A ** 2 * p.eta - 0.5 * p.mu * p.A * al ** 2) / s
               - (p.gamma * p.A ** 2 + p.mu * p.A * s) / 2.0)
        if p.mu != 0:
            ref = np.vectorize(lambda u: p.mu * (p.A * (p.T - u) - self.R.integral(u, p.T)))(t)
            out = out + ref
        return out

    def value(self, t, x):
        x = np.asarray(x, float)
        return self.a_at(t) * x ** 2 + self.b_at(t) * x + self.c_at(t)

    @property
    def max_expected_utility(self) -> float:
        return float(self.value(0.0, self.params.x0))


def risk_neutral(p: ModelParams, R: RefStrategy, n_grid: int = DEFAULT_GRID) -> RiskNeutralSolution:
    validate(p, Mode.RISK_NEUTRAL)
    _check_ref(p, R)
    alpha = 2.0 * p.eta / (2.0 * p.beta - p.gamma)
    grid = np.linspace(0.0, p.T, n_grid)
    sol = RiskNeutralSolution(params=p, R=R, alpha=alpha, grid=grid,
                              a=np.empty(0), b=np.empty(0), c=np.empty(0))
    object.__setattr__(sol, "a", sol.a_at(grid))
    object.__setattr__(sol, "b", sol.b_at(grid))
    object.__setattr__(sol, "c", sol.c_at(grid))
    return sol
