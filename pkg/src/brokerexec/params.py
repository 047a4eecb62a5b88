"""Model constants, validation and derived scalars."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace

from .errors import DomainError

PARAM_KEYS = ("mu", "sigma", "gamma", "eta", "beta", "theta", "m0", "rho", "T", "x0", "A")


class Mode(enum.Enum):
    RISK_AVERSE = "risk-averse"
    RISK_NEUTRAL = "risk-neutral"


@dataclass(frozen=True)
class ModelParams:
    """Market and problem constants.

    ``beta = math.inf`` marks the regime where a terminal block trade is
    forbidden; it is never treated as an ordinary large number.
    """

    mu: float = 0.0
    sigma: float = 200.0
    gamma: float = 0.0
    eta: float = 10.0
    beta: float = 1000.0
    theta: float = 0.002
    m0: float = 0.05
    rho: float = 0.0
    T: float = 1.0
    x0: float = 1.0
    A: float = 0.0

    @property
    def no_terminal_block(self) -> bool:
        return math.isinf(self.beta)

    @property
    def mode(self) -> Mode:
        return Mode.RISK_NEUTRAL if self.theta == 0 else Mode.RISK_AVERSE

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DerivedConstants:
    H: float
    l1: float
    l3: float
    A0: float
    kappa: float
    merton_shift: float
    merton_zero: bool  # True when mu == 0, so the shift is identically 0

    @property
    def c(self) -> float:
        """Rate of the coth argument, sqrt(l1)/H."""
        return math.sqrt(self.l1) / self.H


def _coth_arg(p: ModelParams, H: float, l1: float, l3: float) -> float:
    if p.no_terminal_block:
        return math.inf
    return (l3 + p.theta * (2.0 * p.beta - p.gamma) / 2.0) / math.sqrt(l1)


def _raw_constants(p: ModelParams):
    H = p.theta * p.eta + 0.5 * p.theta ** 2 * p.eta ** 2 * p.m0 ** 2
    l1 = 0.5 * p.theta ** 2 * p.sigma ** 2 * H
    l3 = 0.5 * p.m0 * p.eta * p.theta ** 2 * p.rho * p.sigma
    return H, l1, l3


def validate_domain(p: ModelParams) -> ModelParams:
    """Finiteness and sign checks shared by every mode."""
    for k in PARAM_KEYS:
        v = getattr(p, k)
        if not isinstance(v, (int, float)) or math.isnan(v):
            raise DomainError(f"{k} must be a real number, got {v!r}")
        if k != "beta" and math.isinf(v):
            raise DomainError(f"{k} must be finite")
    if not p.eta > 0:
        raise DomainError("eta > 0 required")
    if p.sigma < 0:
        raise DomainError("sigma >= 0 required")
    if not p.T > 0:
        raise DomainError("T > 0 required")
    if p.theta < 0:
        raise DomainError("theta >= 0 required")
    if p.beta < 0:
        raise DomainError("beta >= 0 required")
    if p.gamma < 0:
        raise DomainError("gamma >= 0 required")
    if p.m0 < 0:
        raise DomainError("m0 >= 0 required")
    if abs(p.rho) > 1:
        raise DomainError("|rho| <= 1 required")
    return p


def validate(p: ModelParams, mode: Mode | None = None) -> ModelParams:
    """Return ``p`` unchanged if it lies in the admissible domain for ``mode``.

    ``mode`` defaults to the one implied by ``theta``.
    """
    if mode is None:
        mode = p.mode
    validate_domain(p)

    if mode is Mode.RISK_NEUTRAL:
        if p.theta != 0:
            raise DomainError("risk-neutral mode requires theta = 0")
        if p.no_terminal_block:
            raise DomainError("risk-neutral mode requires finite beta")
        if not 2.0 * p.beta > p.gamma:
            raise DomainError("risk-neutral requires 2*beta > gamma")
        return p

    if not p.theta > 0:
        raise DomainError("risk-averse mode requires theta > 0")
    if not p.sigma > 0:
        raise DomainError("risk-averse mode requires sigma > 0")
    H, l1, l3 = _raw_constants(p)
    z = _coth_arg(p, H, l1, l3)
    if not z > 1.0:
        raise DomainError(
            f"A0 undefined: arccoth argument <= 1 (got {z:.6g}); "
            "need (l3 + theta*(2*beta - gamma)/2)/sqrt(l1) > 1"
        )
    return p


def derive(p: ModelParams) -> DerivedConstants:
    """Derived scalars for validated risk-averse parameters."""
    if not p.theta > 0:
        raise DomainError("derived constants need theta > 0")
    H, l1, l3 = _raw_constants(p)
    z = _coth_arg(p, H, l1, l3)
    A0 = 0.0 if math.isinf(z) else math.atanh(1.0 / z)
    kappa = math.sqrt(p.theta * p.sigma ** 2 / (2.0 * p.eta))
    shift = p.mu / (p.theta * p.sigma ** 2)
    return DerivedConstants(H=H, l1=l1, l3=l3, A0=A0, kappa=kappa,
                            merton_shift=shift, merton_zero=(p.mu == 0))


_BASE = ModelParams(mu=0.0, sigma=200.0, gamma=0.0, eta=10.0, beta=1000.0,
                    theta=0.002, m0=0.05, rho=0.0, T=1.0, x0=1.0, A=0.0)

# "base-fig" is the baseline used for trajectory and performance figures,
# "base-stress" the baseline row of the stress table. S1..S4 perturb base-stress.
PRESETS: dict[str, ModelParams] = {
    "base-fig": _BASE,
    "base-stress": _BASE.with_(beta=1e6),
    "S1": _BASE.with_(beta=1e6, sigma=2000.0),
    "S2": _BASE.with_(beta=1e7),
    "S3": _BASE.with_(beta=1e6, m0=5.0),
    "S4": _BASE.with_(beta=1e6, eta=0.1),
}


def preset(name: str) -> ModelParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def params_for_kappa(kappa: float, T: float = 1.0, x0: float = 1.0, A: float = 0.0,
                     mu_shift: float = 0.0) -> ModelParams:
    """Zero-execution-risk parameters with a prescribed kappa.

    Uses eta = 1, sigma = 1 so that theta = 2 kappa^2; ``mu_shift`` is the
    desired Merton shift mu/(theta sigma^2).
    """
    theta = 2.0 * kappa ** 2
    return ModelParams(mu=mu_shift * theta, sigma=1.0, gamma=0.0, eta=1.0,
                       beta=math.inf, theta=theta, m0=0.0, rho=0.0,
                       T=T, x0=x0, A=A)
