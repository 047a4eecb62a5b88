"""Brute-force solver for the deterministic execution problem.

Minimises the discretised objective

    sum eta (dx/dt)^2 dt + sum (theta sigma^2 / 2)(x_i - R_i)^2 dt - sum mu x_i dt

over paths with x_0 = x0 and x_n = A. Its stationarity conditions are the
centred-difference Euler-Lagrange equations, a symmetric positive-definite
tridiagonal system solved directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closedform import Trajectory
from .errors import DomainError, SingularSystem
from .kernels.linalg import thomas_solve
from .params import ModelParams
from .refstrat import RefStrategy


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    n: int
    T: float
    R_samples: np.ndarray  # values at interior nodes 1..n-1
    x0: float
    A: float
    eta: float
    q: float  # theta sigma^2 / 2
    mu: float

    def __post_init__(self):
        if self.n < 4:
            raise DomainError("n >= 4 required")
        if not self.T > 0:
            raise DomainError("T > 0 required")
        if np.shape(self.R_samples) != (self.n - 1,):
            raise DomainError("R_samples must hold the n-1 interior values")
        if not self.eta > 0 or self.q < 0:
            raise DomainError("eta > 0 and theta sigma^2 >= 0 required")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def grid(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.dt
        t[-1] = self.T
        return t


def cell_averages(R: RefStrategy, n: int) -> np.ndarray:
    """Mean of R over [t_i - dt/2, t_i + dt/2] for interior nodes.

    Averaging (rather than point sampling) keeps the scheme second order
    when R jumps inside a cell.
    """
    T = R.T
    dt = T / n
    i = np.arange(1, n)
    lo = (i - 0.5) * dt
    hi = np.minimum((i + 0.5) * dt, T)
    return np.array([R.integral(a, b) for a, b in zip(lo, hi)]) / (hi - lo)


def problem_from_params(p: ModelParams, R: RefStrategy, n: int, theta_sigma2: float | None = None) -> DiscreteProblem:
    ts2 = p.theta * p.sigma ** 2 if theta_sigma2 is None else theta_sigma2
    return DiscreteProblem(n=n, T=p.T, R_samples=cell_averages(R, n), x0=p.x0, A=p.A,
                           eta=p.eta, q=0.5 * ts2, mu=p.mu)


def discrete_variational_solve(dp: DiscreteProblem) -> Trajectory:
    n, dt = dp.n, dp.dt
    m = n - 1
    # scaled by dt^2 / (2 eta) for conditioning
    off = -1.0
    diag = np.full(m, 2.0 + dp.q * dt * dt / dp.eta)
    rhs = dt * dt / (2.0 * dp.eta) * (2.0 * dp.q * dp.R_samples + dp.mu)
    rhs[0] += dp.x0
    rhs[-1] += dp.A
    lower = np.full(m, off)
    upper = np.full(m, off)
    x_in = thomas_solve(lower, diag, upper, rhs)
    if not np.all(np.isfinite(x_in)):
        raise SingularSystem("tridiagonal solve failed")
    x = np.concatenate([[dp.x0], x_in, [dp.A]])
    return Trajectory(dp.grid, x, "oracle")


def discrete_objective(dp: DiscreteProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (dp.n + 1,):
        raise DomainError("path must have n + 1 points")
    dt = dp.dt
    dx = np.diff(x)
    inner = x[1:-1]
    return float(np.sum(dp.eta * dx * dx / dt)
                 + np.sum(dp.q * (inner - dp.R_samples) ** 2) * dt
                 - np.sum(dp.mu * inner) * dt)
