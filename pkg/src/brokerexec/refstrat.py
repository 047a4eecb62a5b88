"""Deterministic reference strategies R_t on [0, T].

Every variant is piecewise linear, so all of them expose the same
``segments()`` view: break points plus the value at the start (right limit)
and end (left limit) of each piece. Integrals over these pieces are exact.
The boundary convention R_0 = x0, R_T = A only concerns two points of
measure zero and is not applied by ``eval``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OutOfRange


class RefStrategy:
    """Base class. Subclasses implement ``segments``."""

    T: float
    kind = "base"

    def segments(self):
        raise NotImplementedError

    @property
    def breaks(self) -> np.ndarray:
        return self.segments()[0]

    @property
    def knots(self) -> np.ndarray:
        """Interior break points, where R may jump or kink."""
        return self.segments()[0][1:-1]

    def eval(self, t):
        """R at ``t``; right-continuous at knots, closed at T."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.T) or np.any(np.isnan(t_arr)):
            raise OutOfRange(f"t must lie in [0, {self.T}]")
        br, r0, r1 = self.segments()
        idx = np.clip(np.searchsorted(br, t_arr, side="right") - 1, 0, len(r0) - 1)
        out = _lerp(br, r0, r1, idx, t_arr)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval

    def piece_values(self, t_lo, t_hi):
        """Values at (start, midpoint, end) of intervals that do not straddle a knot.

        Each interval uses the linear piece containing its midpoint, so the
        endpoint values are the one-sided limits from inside the interval.
        """
        t_lo = np.asarray(t_lo, dtype=float)
        t_hi = np.asarray(t_hi, dtype=float)
        mid = 0.5 * (t_lo + t_hi)
        br, r0, r1 = self.segments()
        idx = np.clip(np.searchsorted(br, mid, side="right") - 1, 0, len(r0) - 1)
        return (_lerp(br, r0, r1, idx, t_lo), _lerp(br, r0, r1, idx, mid),
                _lerp(br, r0, r1, idx, t_hi))

    def integral(self, a: float, b: float) -> float:
        """Exact integral of R over [a, b]."""
        br, r0, r1 = self.segments()
        pts = np.unique(np.concatenate([[a, b], br[(br > a) & (br < b)]]))
        lo, mid, hi = self.piece_values(pts[:-1], pts[1:])
        return float(np.sum((lo + hi) * 0.5 * np.diff(pts)))

    def spec_string(self) -> str:
        raise NotImplementedError


def _lerp(br, r0, r1, idx, t):
    lo = br[idx]
    w = (t - lo) / (br[idx + 1] - lo)
    return r0[idx] + (r1[idx] - r0[idx]) * w


@dataclass(frozen=True)
class Constant(RefStrategy):
    level: float
    T: float = 1.0
    kind = "constant"

    def segments(self):
        return (np.array([0.0, self.T]), np.array([self.level], float),
                np.array([self.level], float))

    def spec_string(self):
        return f"constant:{self.level!r}"


@dataclass(frozen=True)
class EndpointsOnly(Constant):
    """Hold ``level`` on (0, T); the endpoints carry x0 and A by convention."""

    kind = "endpoints"

    def spec_string(self):
        return f"endpoints:{self.level!r}"


@dataclass(frozen=True)
class PiecewiseConstant(RefStrategy):
    levels: tuple
    T: float = 1.0
    kind = "piecewise"

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        if len(lv) < 1:
            raise DomainError("piecewise strategy needs at least one level")
        object.__setattr__(self, "levels", lv)

    @property
    def n(self) -> int:
        return len(self.levels)

    def segments(self):
        n = self.n
        br = np.arange(n + 1) * (self.T / n)
        br[-1] = self.T
        lv = np.array(self.levels)
        return br, lv, lv.copy()

    def spec_string(self):
        return "piecewise:" + ",".join(repr(v) for v in self.levels)


@dataclass(frozen=True)
class Linear(RefStrategy):
    """Straight line from x0 to A (the TWAP schedule)."""

    x0: float
    A: float
    T: float = 1.0
    kind = "linear"

    def segments(self):
        return (np.array([0.0, self.T]), np.array([self.x0], float),
                np.array([self.A], float))

    def spec_string(self):
        return f"linear:{self.x0!r},{self.A!r}"


@dataclass(frozen=True, eq=False)
class Tabulated(RefStrategy):
    times: np.ndarray
    values: np.ndarray
    source: str | None = field(default=None, compare=False)
    kind = "tabulated"

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise DomainError("tabulated strategy needs matching 1-d arrays of length >= 2")
        if t[0] != 0.0 or not np.all(np.diff(t) > 0):
            raise DomainError("tabulated times must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise DomainError("tabulated values must be finite")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def segments(self):
        return self.times, self.values[:-1], self.values[1:]

    def spec_string(self):
        if self.source is None:
            raise DomainError("tabulated strategy without a source file cannot be serialised")
        return f"tabulated:{self.source}"


def load_csv(path, T: float | None = None) -> Tabulated:
    """Two-column CSV of (t, R); a non-numeric first row is taken as header."""
    ts, vs = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise DomainError(f"{path}: bad row {i + 1}: {row!r}") from None
    tab = Tabulated(np.array(ts), np.array(vs), source=str(path))
    if T is not None and abs(tab.T - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"{path}: table ends at t={tab.T}, expected T={T}")
    return tab


def parse_spec(spec: str, T: float, x0: float, A: float) -> RefStrategy:
    """Build a strategy from a short text form.

    Accepted: ``is`` (R = A), ``tc`` (R = x0), ``twap``/``linear``,
    ``constant:L``, ``endpoints:L``, ``piecewise:L1,L2,...``,
    ``linear:a,b``, ``tabulated:path.csv``.
    """
    name, _, arg = spec.strip().partition(":")
    name = name.strip().lower()
    try:
        if name == "is":
            return Constant(float(A), T)
        if name == "tc":
            return Constant(float(x0), T)
        if name in ("twap", "linear") and not arg:
            return Linear(float(x0), float(A), T)
        if name == "linear":
            a, b = (float(s) for s in arg.split(","))
            return Linear(a, b, T)
        if name == "constant":
            return Constant(float(arg), T)
        if name == "endpoints":
            return EndpointsOnly(float(arg), T)
        if name == "piecewise":
            return PiecewiseConstant(tuple(float(s) for s in arg.split(",")), T)
        if name == "tabulated":
            return load_csv(arg, T)
    except ValueError as exc:
        raise DomainError(f"bad reference strategy {spec!r}: {exc}") from None
    raise DomainError(f"unknown reference strategy {spec!r}")


def _merged_pieces(R1: RefStrategy, R2: RefStrategy):
    if abs(R1.T - R2.T) > 1e-12 * max(1.0, R1.T):
        raise DomainError("strategies live on different horizons")
    pts = np.unique(np.concatenate([R1.breaks, R2.breaks]))
    return pts[:-1], pts[1:]


def l2_distance_sq(R1: RefStrategy, R2: RefStrategy) -> float:
    """Integral over [0, T] of (R1 - R2)^2.

    Simpson's rule on the merged break points; the difference is linear on
    every merged piece, so this is exact.
    """
    lo, hi = _merged_pieces(R1, R2)
    a1, m1, b1 = R1.piece_values(lo, hi)
    a2, m2, b2 = R2.piece_values(lo, hi)
    da, dm, db = a1 - a2, m1 - m2, b1 - b2
    return float(np.sum((hi - lo) / 6.0 * (da * da + 4.0 * dm * dm + db * db)))


def piecewise_approx(R: RefStrategy, n: int) -> PiecewiseConstant:
    """Piecewise-constant strategy on n equal intervals holding the interval means."""
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    n = int(n)
    T = R.T
    edges = np.arange(n + 1) * (T / n)
    edges[-1] = T
    h = T / n
    levels = tuple(R.integral(edges[k], edges[k + 1]) / (edges[k + 1] - edges[k]) if h > 0 else 0.0
                   for k in range(n))
    return PiecewiseConstant(levels, T)


def mean_approx_bound(R: RefStrategy, n: int) -> float:
    """Upper bound T^3 sup|R'|^2 / (12 n^2) on the interval-mean L2 error.

    Valid for continuous piecewise-linear R (the mean deviation of a
    Lipschitz function on an interval of length h is at most L^2 h^3 / 12).
    """
    br, r0, r1 = R.segments()
    slope = np.max(np.abs((r1 - r0) / np.diff(br)))
    return float(R.T ** 3 * slope ** 2 / (12.0 * n * n))
