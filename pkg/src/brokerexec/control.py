"""Trading-rate policies.

Every policy here is affine in the inventory deviation,
v(t, x) = g1(t) (x - A) + g0(t), which is what the simulator consumes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import ModelParams
from .riccati import RiccatiSolution, RiskNeutralSolution


class Policy:
    name = "policy"
    params: ModelParams

    def affine_coefficients(self, times):
        """(g1, g0) arrays at ``times``."""
        raise NotImplementedError

    def rate(self, t, x):
        g1, g0 = self.affine_coefficients(np.atleast_1d(np.asarray(t, dtype=float)))
        v = g1 * (np.asarray(x, dtype=float) - self.params.A) + g0
        return float(v[0]) if np.ndim(t) == 0 and np.ndim(x) == 0 else v


@dataclass(frozen=True)
class OptimalPolicy(Policy):
    """Risk-averse optimal feedback law built from a Riccati solution."""

    sol: RiccatiSolution
    name = "optimal"

    @property
    def params(self):
        return self.sol.params

    def affine_coefficients(self, times):
        t = np.asarray(times, dtype=float)
        p, c = self.sol.params, self.sol.constants
        if np.any(t < 0) or np.any(t >= p.T):
            raise DomainError("optimal rate is defined for t in [0, T)")
        k = 1.0 + p.theta * p.eta * p.m0 ** 2
        g1 = (k * self.sol.b2_at(t) - c.l3) / c.H
        g0 = c.l3 / c.H * (self.sol.R.eval(t) - p.A) + k * self.sol.b1_at(t) / (2.0 * c.H)
        return np.asarray(g1, float), np.asarray(g0, float)


def optimal_rate(sol: RiccatiSolution, t, x):
    """Optimal trading rate at (t, x)."""
    return OptimalPolicy(sol).rate(t, x)


def optimal_rate_theorem_form(sol: RiccatiSolution, t, x):
    """Same rate written with an (R - x) cross term; kept as a cross-check."""
    p, c = sol.params, sol.constants
    k = 1.0 + p.theta * p.eta * p.m0 ** 2
    x = np.asarray(x, dtype=float)
    return (k * sol.b2_at(t) / c.H * (x - p.A) + k / (2.0 * c.H) * sol.b1_at(t)
            + c.l3 / c.H * (sol.R.eval(t) - x))


@dataclass(frozen=True)
class RiskNeutralPolicy(Policy):
    rn: RiskNeutralSolution
    name = "risk-neutral"

    @property
    def params(self):
        return self.rn.params

    def affine_coefficients(self, times):
        t = np.asarray(times, dtype=float)
        p, al = self.rn.params, self.rn.alpha
        s = p.T - t + al
        g1 = 1.0 / s
        g0 = -p.mu / (4.0 * p.eta) * (s - al ** 2 / s)
        return g1, g0


def risk_neutral_rate(rn: RiskNeutralSolution, t, x):
    return RiskNeutralPolicy(rn).rate(t, x)


@dataclass(frozen=True)
class TwapPolicy(Policy):
    params: ModelParams
    name = "twap"

    def affine_coefficients(self, times):
        t = np.asarray(times, dtype=float)
        p = self.params
        return np.zeros_like(t), np.full_like(t, (p.x0 - p.A) / p.T)


def twap_rate(p: ModelParams) -> float:
    return (p.x0 - p.A) / p.T
