"""Compare numba and pure-numpy kernel timings.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--small]
Both implementations are imported directly, so the env flag does not matter
here. Outputs of each pair are checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from brokerexec.kernels import HAVE_NUMBA
from brokerexec.kernels import linalg, montecarlo, ode, quadrature, rng


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(small):
    n_paths = 2000 if small else 20000
    n_steps = 1000
    seed = rng.seed_to_u64(123)

    n = 100_000
    lower = np.full(n, -1.0)
    upper = np.full(n, -1.0)
    diag = np.full(n, 2.001)
    rhs = np.random.default_rng(0).standard_normal(n)

    m = 2001
    t = np.linspace(0.0, 1.0, m)
    pa = 2.0 / np.tanh(0.02 + 2.0 * (1.0 - t[:-1]))
    pb = 2.0 / np.tanh(0.02 + 2.0 * (1.0 - t[1:]))
    pm = 0.5 * (pa + pb)
    fa = np.sin(t[:-1])
    fb = np.sin(t[1:])
    fm = np.sin(0.5 * (t[:-1] + t[1:]))

    tq = np.linspace(0.0, 3.0, 501)
    br = np.array([0.0, 1.0, 2.0, 3.0])
    r0 = np.array([7.5, 4.5, 1.5])
    h = 3.0 / 2000
    nodes = quadrature.fixed_nodes(br, r0, r0, h)

    g1 = 2.0 / np.tanh(0.02 + 2.0 * (1.0 - np.arange(n_steps) / n_steps))
    g0 = np.zeros(n_steps)
    ref = np.zeros(n_steps)
    rec = np.array([n_steps], dtype=np.int64)

    def sim(impl):
        term = np.empty((n_paths, 4))
        rx = np.empty((n_paths, 1))
        rs = np.empty((n_paths, 1))
        rv = np.empty((n_paths, 1))
        bad = np.empty(n_paths, dtype=np.int64)
        impl(g1, g0, ref, 1.0 / n_steps, 1.0, 0.0, 100.0, 0.0, 200.0, 0.0, 10.0, 1000.0, 0.05, 0.0,
             seed, np.uint64(0), rec, term, rx, rs, rv, bad)
        return term

    is_vals = np.linspace(1.0, 0.0, n_steps + 1)
    decay = np.full(n_steps, 0.999)
    decay[-1] = 0.0

    def bridge(impl):
        out = np.empty((n_paths, 1))
        impl(is_vals, decay, 1.0, 0.05, 0.0, 1.0 / n_steps, seed, np.uint64(0),
             np.array([n_steps // 2], dtype=np.int64), out)
        return out

    return {
        f"normals {n_paths // 10}x{n_steps}": (
            lambda: rng.normals_nb(seed, 0, n_paths // 10, n_steps)[0],
            lambda: rng.normals_np(seed, 0, n_paths // 10, n_steps)[0]),
        f"thomas n={n}": (
            lambda: linalg.thomas_nb(lower, diag, upper, rhs),
            lambda: linalg.thomas_np(lower, diag, upper, rhs)),
        f"rk4 n={m}": (
            lambda: ode.rk4_linear_backward_nb(t, pa, pm, pb, fa, fm, fb, 0.0, np.nan),
            lambda: ode.rk4_linear_backward_np(t, pa, pm, pb, fa, fm, fb, 0.0, np.nan)),
        f"kernel quad {tq.size} pts": (
            lambda: quadrature.kernel_integral_nb(tq, br, r0, r0, *nodes, 5.0, 3.0, h),
            lambda: quadrature.kernel_integral_np(tq, br, r0, r0, *nodes, 5.0, 3.0, h)),
        f"simulate {n_paths}x{n_steps}": (
            lambda: sim(montecarlo.simulate_nb), lambda: sim(montecarlo.simulate_np)),
        f"bridge {n_paths}x{n_steps}": (
            lambda: bridge(montecarlo.bridge_nb), lambda: bridge(montecarlo.bridge_np)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--small", action="store_true")
    args = ap.parse_args()
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':32s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (f_nb, f_np) in cases(args.small).items():
        a = np.asarray(f_nb())  # also triggers compilation
        b = np.asarray(f_np())
        diff = float(np.max(np.abs(a - b)))
        t_nb = _time(f_nb, args.repeat)
        t_np = _time(f_np, args.repeat)
        print(f"{name:32s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
