"""Monte Carlo engine for execution policies.

Paths use counter-based normals keyed by (seed, path_index), so an ensemble
is bit-identical however its paths are split across worker threads.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

from . import riccati
from .closedform import Trajectory, sinh_ratio
from .control import OptimalPolicy, Policy, RiskNeutralPolicy, TwapPolicy
from .errors import DomainError, NonFiniteState
from .kernels import montecarlo as mck
from .kernels.rng import seed_to_u64, standard_normals
from .params import PRESETS, ModelParams, derive, validate_domain
from .refstrat import Constant, RefStrategy, parse_spec

logger = logging.getLogger(__name__)

DEFAULT_S0 = 100.0
DEFAULT_STEPS = 1000
DEFAULT_PATHS = 100_000
QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
MAX_BINS = 1000
_CHUNK = 4096


def uniform_grid(T: float, n_steps: int) -> np.ndarray:
    t = np.arange(n_steps + 1) * (T / n_steps)
    t[-1] = T
    return t


def correlated_increments(seed, path_index, n_steps, dt, rho):
    """(dW, dZ) for one path; dZ = rho dW + sqrt(1 - rho^2) dW_perp."""
    if abs(rho) > 1:
        raise DomainError("|rho| <= 1 required")
    if not dt > 0:
        raise DomainError("dt > 0 required")
    z1, z2 = standard_normals(seed, path_index, 1, n_steps)
    sq = math.sqrt(dt)
    dW = sq * z1[0]
    dZ = rho * dW + math.sqrt(max(0.0, 1.0 - rho * rho)) * sq * z2[0]
    return dW, dZ


def utility(excess, theta):
    """CARA utility (1 - exp(-theta x)) / theta, the identity when theta = 0."""
    excess = np.asarray(excess, dtype=float)
    if theta == 0:
        return excess
    with np.errstate(over="ignore"):
        return -np.expm1(-theta * excess) / theta


@dataclass(frozen=True, eq=False)
class PathRecord:
    grid: np.ndarray
    x: np.ndarray
    S: np.ndarray
    v: np.ndarray
    pnl: float
    pnl_ref: float
    excess: float
    utility: float
    pnl_ito: float


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    n_paths: int
    seed: int
    policy: str
    theta: float
    pnl: np.ndarray
    pnl_ref: np.ndarray
    pnl_ito: np.ndarray
    excess: np.ndarray
    utility: np.ndarray
    x_T: np.ndarray
    records: np.ndarray | None = field(default=None, repr=False)  # (n_paths, n_rec) inventory
    record_times: np.ndarray | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.excess))

    @property
    def std(self) -> float:
        return float(np.std(self.excess, ddof=1))

    @property
    def quantiles(self) -> dict:
        q = np.quantile(self.excess, QUANTILES)
        return {f"q{int(round(100 * a)):02d}": float(v) for a, v in zip(QUANTILES, q)}

    @property
    def utility_mean(self) -> float:
        with np.errstate(invalid="ignore", over="ignore"):
            return float(np.mean(self.utility))

    @property
    def utility_std(self) -> float:
        with np.errstate(invalid="ignore", over="ignore"):
            return float(np.std(self.utility, ddof=1))

    @property
    def log_mean_disutility(self) -> float:
        """log E[exp(-theta excess)], finite even when utilities overflow."""
        if self.theta == 0:
            return math.nan
        return float(logsumexp(-self.theta * self.excess) - math.log(self.n_paths))

    @property
    def certainty_equivalent(self) -> float:
        if self.theta == 0:
            return self.mean
        return -self.log_mean_disutility / self.theta

    def histogram(self):
        return histogram(self.excess)

    def summary(self) -> dict:
        edges, counts = self.histogram()
        return {
            "policy": self.policy,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "theta": self.theta,
            "excess_mean": self.mean,
            "excess_std": self.std,
            "excess_min": float(np.min(self.excess)),
            "excess_max": float(np.max(self.excess)),
            "quantiles": self.quantiles,
            "utility_mean": self.utility_mean,
            "utility_std": self.utility_std,
            "log_mean_disutility": self.log_mean_disutility,
            "certainty_equivalent": self.certainty_equivalent,
            "pnl_mean": float(np.mean(self.pnl)),
            "pnl_ref_mean": float(np.mean(self.pnl_ref)),
            "terminal_inventory_mean": float(np.mean(self.x_T)),
            "histogram_bins": int(len(counts)),
        }


def histogram(samples, max_bins: int = MAX_BINS):
    """Freedman-Diaconis bins, falling back to ``max_bins`` equal bins for heavy tails."""
    samples = np.asarray(samples, dtype=float)
    lo, hi = float(np.min(samples)), float(np.max(samples))
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5])
    else:
        iqr = np.subtract(*np.percentile(samples, [75, 25]))
        width = 2.0 * iqr / np.cbrt(samples.size)
        if width <= 0 or (hi - lo) / width > max_bins:
            edges = np.linspace(lo, hi, max_bins + 1)
        else:
            edges = np.histogram_bin_edges(samples, bins="fd")
    counts, edges = np.histogram(samples, bins=edges)
    return edges, counts


def _validate_sim_params(p: ModelParams):
    validate_domain(p)
    if p.no_terminal_block:
        raise DomainError("simulation needs a finite beta")


def _policy_arrays(p, policy: Policy, R: RefStrategy, n_steps):
    grid = uniform_grid(p.T, n_steps)
    g1, g0 = policy.affine_coefficients(grid[:-1])
    ref_dev = np.asarray(R.eval(grid[:-1]), dtype=float) - p.A
    for name, arr in (("g1", g1), ("g0", g0)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState(f"policy coefficient {name} is not finite")
    return grid, np.ascontiguousarray(g1, float), np.ascontiguousarray(g0, float), np.ascontiguousarray(ref_dev)


def _run_chunk(args):
    (g1, g0, ref_dev, dt, p, S0, seed, start, count, rec_idx) = args
    terminal = np.empty((count, mck.N_TERMINAL))
    nrec = rec_idx.size
    rec_x = np.full((count, nrec), np.nan)
    rec_S = np.full((count, nrec), np.nan)
    rec_v = np.full((count, nrec), np.nan)
    bad = np.empty(count, dtype=np.int64)
    mck.simulate(g1, g0, ref_dev, dt, float(p.x0), float(p.A), float(S0), float(p.mu),
                 float(p.sigma), float(p.gamma), float(p.eta), float(p.beta), float(p.m0),
                 float(p.rho), seed, np.uint64(start), rec_idx, terminal, rec_x, rec_S, rec_v, bad)
    return start, terminal, rec_x, rec_S, rec_v, bad


def _simulate_block(p, policy, R, n_steps, seed, path_start, n_paths, rec_idx,
                    S0=DEFAULT_S0, workers=None, chunk=_CHUNK):
    _validate_sim_params(p)
    if n_steps < 1:
        raise DomainError("n_steps >= 1 required")
    grid, g1, g0, ref_dev = _policy_arrays(p, policy, R, n_steps)
    dt = p.T / n_steps
    rec_idx = np.ascontiguousarray(np.unique(np.asarray(rec_idx, dtype=np.int64)))
    if rec_idx.size and (rec_idx[0] < 0 or rec_idx[-1] > n_steps):
        raise DomainError("record indices must lie in [0, n_steps]")
    seed64 = seed_to_u64(seed)
    tasks = [(g1, g0, ref_dev, dt, p, S0, seed64, path_start + s, min(chunk, n_paths - s), rec_idx)
             for s in range(0, n_paths, chunk)]
    workers = workers or min(len(tasks), os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(t) for t in tasks]
    parts.sort(key=lambda r: r[0])
    terminal = np.concatenate([r[1] for r in parts])
    rec_x = np.concatenate([r[2] for r in parts])
    rec_S = np.concatenate([r[3] for r in parts])
    rec_v = np.concatenate([r[4] for r in parts])
    bad = np.concatenate([r[5] for r in parts])
    hit = np.nonzero(bad >= 0)[0]
    if hit.size:
        k = int(hit[0])
        raise NonFiniteState(f"state became non-finite on path {path_start + k} at step {int(bad[k])}",
                             path_index=path_start + k, step=int(bad[k]))
    if not np.all(np.isfinite(terminal)):
        k = int(np.nonzero(~np.all(np.isfinite(terminal), axis=1))[0][0])
        raise NonFiniteState(f"terminal P&L non-finite on path {path_start + k}",
                             path_index=path_start + k, step=n_steps)
    return grid, terminal, rec_x, rec_S, rec_v, rec_idx


def simulate_path(p: ModelParams, policy: Policy, R: RefStrategy, n_steps: int = DEFAULT_STEPS,
                  seed: int = 0, path_index: int = 0, S0: float = DEFAULT_S0) -> PathRecord:
    """One Euler-Maruyama path with full state records and P&L accounting."""
    if n_steps < 50:
        raise DomainError("n_steps >= 50 required")
    rec = np.arange(n_steps + 1)
    grid, term, rx, rS, rv, _ = _simulate_block(p, policy, R, n_steps, seed, path_index, 1, rec, S0,
                                                workers=1)
    pnl, ito, ref = term[0, mck.PNL], term[0, mck.PNL_ITO], term[0, mck.PNL_REF]
    ex = pnl - ref
    return PathRecord(grid=grid, x=rx[0], S=rS[0], v=rv[0, :-1], pnl=float(pnl), pnl_ref=float(ref),
                      excess=float(ex), utility=float(utility(ex, p.theta)), pnl_ito=float(ito))


def monte_carlo(p: ModelParams, policy: Policy, R: RefStrategy, n_paths: int = DEFAULT_PATHS,
                n_steps: int = DEFAULT_STEPS, seed: int = 0, S0: float = DEFAULT_S0,
                workers: int | None = None, record_idx=(), chunk: int = _CHUNK) -> EnsembleStats:
    """Simulate ``n_paths`` paths (indices 0..n_paths-1) and collect statistics."""
    if n_paths < 100:
        raise DomainError("n_paths >= 100 required")
    grid, term, rx, _, _, rec_idx = _simulate_block(p, policy, R, n_steps, seed, 0, n_paths,
                                                    record_idx, S0, workers, chunk)
    pnl = term[:, mck.PNL]
    ref = term[:, mck.PNL_REF]
    ex = pnl - ref
    return EnsembleStats(n_paths=n_paths, seed=int(seed), policy=getattr(policy, "name", "policy"),
                         theta=p.theta, pnl=pnl, pnl_ref=ref, pnl_ito=term[:, mck.PNL_ITO],
                         excess=ex, utility=utility(ex, p.theta), x_T=term[:, mck.X_T],
                         records=rx if rec_idx.size else None,
                         record_times=grid[rec_idx] if rec_idx.size else None)


@dataclass(frozen=True)
class UtilityComparison:
    """Welch test of E[u(a)] - E[u(b)].

    Utilities are compared through exp(-theta excess) rescaled by the common
    maximum, which orders expected utilities identically and stays finite
    when utilities themselves overflow.
    """

    z: float
    p_superior: float  # one-sided p-value for E[u(a)] > E[u(b)]
    ce_a: float
    ce_b: float

    def superior(self, confidence: float) -> bool:
        return self.z > sps.norm.ppf(confidence)

    def not_inferior(self, confidence: float) -> bool:
        return self.z > -sps.norm.ppf(confidence)


def compare_utility(a: EnsembleStats, b: EnsembleStats) -> UtilityComparison:
    if a.theta != b.theta:
        raise DomainError("ensembles use different risk aversion")
    theta = a.theta
    if theta == 0:
        wa, wb = a.excess, b.excess
        diff = wa.mean() - wb.mean()
    else:
        ea, eb = -theta * a.excess, -theta * b.excess
        M = max(ea.max(), eb.max())
        wa, wb = np.exp(ea - M), np.exp(eb - M)
        diff = wb.mean() - wa.mean()
    se = math.sqrt(wa.var(ddof=1) / wa.size + wb.var(ddof=1) / wb.size)
    if se == 0:
        z = math.copysign(math.inf, diff) if diff != 0 else 0.0
    else:
        z = diff / se
    return UtilityComparison(z=float(z), p_superior=float(sps.norm.sf(z)),
                             ce_a=a.certainty_equivalent, ce_b=b.certainty_equivalent)


@dataclass(frozen=True)
class BootstrapComparison:
    """Paired bootstrap of the certainty-equivalent difference CE(a) - CE(b).

    The certainty equivalent is a strictly increasing function of mean
    utility, so its sign orders mean utilities. Unlike a z-test it keeps
    power when one extreme path dominates a sample mean.
    """

    ce_diff: float
    lower: float  # one-sided lower confidence bound
    frac_positive: float
    confidence: float
    n_boot: int

    @property
    def superior(self) -> bool:
        return self.lower > 0


def _ce(excess, theta):
    if theta == 0:
        return np.mean(excess, axis=-1)
    return -(logsumexp(-theta * excess, axis=-1) - math.log(excess.shape[-1])) / theta


def bootstrap_ce_difference(a: EnsembleStats, b: EnsembleStats, n_boot: int = 1000,
                            confidence: float = 0.95, seed: int = 0,
                            batch: int = 50) -> BootstrapComparison:
    """Resamples path indices jointly, matching common random numbers across ensembles."""
    if a.theta != b.theta or a.n_paths != b.n_paths:
        raise DomainError("paired bootstrap needs ensembles with equal theta and n_paths")
    theta, n = a.theta, a.n_paths
    rng = np.random.default_rng(seed)
    diffs = np.empty(n_boot)
    for s in range(0, n_boot, batch):
        m = min(batch, n_boot - s)
        idx = rng.integers(0, n, size=(m, n))
        diffs[s:s + m] = _ce(a.excess[idx], theta) - _ce(b.excess[idx], theta)
    lower = float(np.quantile(diffs, 1.0 - confidence))
    return BootstrapComparison(ce_diff=float(_ce(a.excess, theta) - _ce(b.excess, theta)),
                               lower=lower, frac_positive=float(np.mean(diffs > 0)),
                               confidence=confidence, n_boot=n_boot)


# ---------------------------------------------------------------------------
# OU-bridge diagnostics


def _bridge_setup(p: ModelParams, n_steps):
    if p.A != 0 or p.rho != 0 or p.mu != 0:
        raise DomainError("bridge diagnostics assume A = rho = mu = 0")
    kappa = derive(p).kappa
    grid = uniform_grid(p.T, n_steps)
    rem = p.T - grid
    is_vals = sinh_ratio(kappa, p.T, rem)
    decay = np.array([sinh_ratio(kappa, rem[i], rem[i + 1]) for i in range(n_steps)])
    return grid, np.ascontiguousarray(is_vals), np.ascontiguousarray(decay)


def bridge_ensemble(p: ModelParams, n_steps: int, n_paths: int, seed: int, record_idx,
                    path_start: int = 0) -> np.ndarray:
    """IS path plus OU-bridge noise at ``record_idx`` for many paths."""
    grid, is_vals, decay = _bridge_setup(p, n_steps)
    rec = np.ascontiguousarray(np.asarray(record_idx, dtype=np.int64))
    out = np.empty((n_paths, rec.size))
    mck.bridge(is_vals, decay, float(p.x0), float(p.m0), float(p.rho), p.T / n_steps,
               seed_to_u64(seed), np.uint64(path_start), rec, out)
    return out


def is_plus_ou_bridge_path(p: ModelParams, n_steps: int = DEFAULT_STEPS, seed: int = 0,
                           path_index: int = 0) -> Trajectory:
    """First-order (in m0) approximation of the optimal inventory path.

    Uses the same dZ increments as ``simulate_path`` with equal seed and index.
    """
    grid, _, _ = _bridge_setup(p, n_steps)
    x = bridge_ensemble(p, n_steps, 1, seed, np.arange(n_steps + 1), path_index)[0]
    return Trajectory(grid, x, "is+ou-bridge")


def inventory_variance(p: ModelParams, t):
    """m0^2 int_0^t (sinh k(T-t) / sinh k(T-s))^2 ds.

    The integral has the closed form sinh(k(T-t)) sinh(kt) / (k sinh(kT)),
    evaluated here in an overflow-free way.
    """
    kappa = derive(p).kappa
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > p.T):
        raise DomainError("t outside [0, T]")
    a = kappa * (p.T - t)
    b = kappa * t
    val = 0.5 * np.expm1(-2 * a) * np.expm1(-2 * b) / (-np.expm1(-2 * kappa * p.T)) / kappa
    out = p.m0 ** 2 * val
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# policies and stress scenarios


def make_policy(name: str, p: ModelParams, R: RefStrategy, n_grid: int = riccati.DEFAULT_GRID) -> Policy:
    name = name.lower()
    if name == "optimal":
        return OptimalPolicy(riccati.solve(p, R, n_grid))
    if name in ("risk-neutral", "riskneutral"):
        return RiskNeutralPolicy(riccati.risk_neutral(p, R))
    if name == "twap":
        validate_domain(p)
        return TwapPolicy(p)
    raise DomainError(f"unknown policy {name!r}")


@dataclass(frozen=True)
class StressScenario:
    name: str
    params: ModelParams
    description: str


def stress_suite() -> list:
    return [
        StressScenario("Baseline", PRESETS["base-stress"], "baseline"),
        StressScenario("S1", PRESETS["S1"], "large sigma"),
        StressScenario("S2", PRESETS["S2"], "large beta"),
        StressScenario("S3", PRESETS["S3"], "large m0"),
        StressScenario("S4", PRESETS["S4"], "small eta"),
    ]


@dataclass(frozen=True, eq=False)
class StressResult:
    scenario: StressScenario
    optimal: EnsembleStats
    twap: EnsembleStats
    comparison: UtilityComparison
    bootstrap: BootstrapComparison | None = None


def run_stress(n_paths: int = DEFAULT_PATHS, n_steps: int = DEFAULT_STEPS, seed: int = 0,
               ref: str = "is", S0: float = DEFAULT_S0, workers: int | None = None,
               scenarios=None, n_boot: int = 1000) -> list:
    out = []
    for sc in scenarios or stress_suite():
        p = sc.params
        R = parse_spec(ref, p.T, p.x0, p.A)
        opt = monte_carlo(p, make_policy("optimal", p, R), R, n_paths, n_steps, seed, S0, workers)
        tw = monte_carlo(p, make_policy("twap", p, R), R, n_paths, n_steps, seed, S0, workers)
        cmp_ = compare_utility(opt, tw)
        boot = bootstrap_ce_difference(opt, tw, n_boot, seed=seed) if n_boot else None
        logger.info("%s: CE optimal %.6g, CE twap %.6g, z %.3g", sc.name, cmp_.ce_a, cmp_.ce_b, cmp_.z)
        out.append(StressResult(sc, opt, tw, cmp_, boot))
    return out


def is_reference(p: ModelParams) -> RefStrategy:
    """Block trade at t = 0: R = A on (0, T]."""
    return Constant(p.A, p.T)


__all__ = [
    "PathRecord", "EnsembleStats", "UtilityComparison", "StressScenario", "StressResult",
    "BootstrapComparison", "bootstrap_ce_difference", "correlated_increments", "simulate_path", "monte_carlo", "compare_utility", "utility",
    "bridge_ensemble", "is_plus_ou_bridge_path", "inventory_variance", "make_policy",
    "stress_suite", "run_stress", "uniform_grid", "histogram", "is_reference",
]
