import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import solve_banded
from scipy.stats import kstest

from brokerexec.kernels import HAVE_NUMBA, backend, linalg, montecarlo, ode, quadrature, rng

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
SEED = rng.seed_to_u64(2024)


@needs_numba
def test_normals_agree_to_rounding():
    # the integer streams match exactly; log/cos may differ by one ulp between libms
    a = rng.normals_nb(SEED, 5, 30, 200)
    b = rng.normals_np(SEED, 5, 30, 200)
    np.testing.assert_allclose(a[0], b[0], rtol=4e-16, atol=4e-16)
    np.testing.assert_allclose(a[1], b[1], rtol=4e-16, atol=4e-16)


@needs_numba
def test_mixer_bit_identical():
    z = np.arange(1000, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    a = np.array([rng.mix64_nb(v) for v in z], dtype=np.uint64)
    np.testing.assert_array_equal(a, rng.mix64_np(z))


def test_normals_distribution():
    z1, z2 = rng.standard_normals(7, 0, 200, 500)
    flat = np.concatenate([z1.ravel(), z2.ravel()])
    assert kstest(flat, "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z1.ravel(), z2.ravel())[0, 1]) < 0.01


def test_normals_counter_based():
    whole = rng.standard_normals(3, 0, 10, 50)[0]
    part = rng.standard_normals(3, 4, 3, 50)[0]
    np.testing.assert_array_equal(whole[4:7], part)
    other = rng.standard_normals(4, 0, 10, 50)[0]
    assert not np.array_equal(whole, other)


def test_seed_mapping():
    assert rng.seed_to_u64(0) != rng.seed_to_u64(1)
    assert rng.seed_to_u64(-1) == rng.seed_to_u64(-1)


@given(n=st.integers(3, 300), shift=st.floats(0.01, 5), seed=st.integers(0, 1000))
def test_thomas_against_banded(n, shift, seed):
    r = np.random.default_rng(seed)
    lower = -r.uniform(0, 1, n)
    upper = -r.uniform(0, 1, n)
    diag = np.abs(lower) + np.abs(upper) + shift
    rhs = r.standard_normal(n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ref = solve_banded((1, 1), ab, rhs)
    np.testing.assert_allclose(linalg.thomas_np(lower, diag, upper, rhs), ref, rtol=1e-10, atol=1e-12)
    if HAVE_NUMBA:
        np.testing.assert_allclose(linalg.thomas_nb(lower, diag, upper, rhs), ref, rtol=1e-10, atol=1e-12)


def _rk4_case(m=401):
    t = np.linspace(0.0, 1.0, m)
    pa = 2.0 / np.tanh(0.05 + 2.0 * (1.0 - t[:-1]))
    pb = 2.0 / np.tanh(0.05 + 2.0 * (1.0 - t[1:]))
    pm = 2.0 / np.tanh(0.05 + 2.0 * (1.0 - 0.5 * (t[:-1] + t[1:])))
    fa, fb, fm = np.cos(t[:-1]), np.cos(t[1:]), np.cos(0.5 * (t[:-1] + t[1:]))
    return t, pa, pm, pb, fa, fm, fb


@needs_numba
def test_rk4_parity():
    args = _rk4_case()
    a = ode.rk4_linear_backward_nb(*args, 0.3, np.nan)
    b = ode.rk4_linear_backward_np(*args, 0.3, np.nan)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_rk4_fourth_order_on_linear_ode():
    # y' = p y + f with p = 1, f = 0 backward from y(1) = 1: y = exp(t - 1)
    errs = []
    for m in (21, 41, 81):
        t = np.linspace(0, 1, m)
        one = np.ones(m - 1)
        zero = np.zeros(m - 1)
        y = ode.rk4_linear_backward_np(t, one, one, one, zero, zero, zero, 1.0, np.nan)
        errs.append(np.max(np.abs(np.asarray(y) - np.exp(t - 1))))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.1)


@needs_numba
def test_kernel_quadrature_parity():
    tq = np.linspace(0.0, 3.0, 101)
    br = np.array([0.0, 1.0, 2.0, 3.0])
    r0 = np.array([7.5, 4.5, 1.5])
    r1 = np.array([6.0, 4.5, 0.0])
    h = 3.0 / 500
    nodes = quadrature.fixed_nodes(br, r0, r1, h)
    a = quadrature.kernel_integral_nb(tq, br, r0, r1, *nodes, 5.0, 3.0, h)
    b = quadrature.kernel_integral_np(tq, br, r0, r1, *nodes, 5.0, 3.0, h)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


def _sim(impl, n_paths=64, n_steps=200):
    g1 = 2.0 / np.tanh(0.05 + 2.0 * (1.0 - np.arange(n_steps) / n_steps))
    g0 = np.full(n_steps, 0.1)
    ref = np.linspace(1.0, 0.0, n_steps)
    rec = np.array([0, 50, n_steps], dtype=np.int64)
    term = np.empty((n_paths, montecarlo.N_TERMINAL))
    rx = np.empty((n_paths, 3))
    rs = np.empty((n_paths, 3))
    rv = np.empty((n_paths, 3))
    bad = np.empty(n_paths, dtype=np.int64)
    impl(g1, g0, ref, 1.0 / n_steps, 1.0, 0.0, 100.0, 0.2, 200.0, 1.5, 10.0, 1000.0, 0.05, 0.4,
         SEED, np.uint64(9), rec, term, rx, rs, rv, bad)
    return term, rx, rs, bad


@needs_numba
def test_simulate_parity():
    a = _sim(montecarlo.simulate_nb)
    b = _sim(montecarlo.simulate_np)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-9, equal_nan=True)


@needs_numba
def test_bridge_parity():
    n = 300
    is_vals = np.linspace(1.0, 0.0, n + 1)
    decay = np.linspace(0.999, 0.0, n)
    rec = np.array([0, 150, n], dtype=np.int64)
    outs = []
    for impl in (montecarlo.bridge_nb, montecarlo.bridge_np):
        out = np.empty((40, 3))
        impl(is_vals, decay, 1.0, 0.3, 0.2, 1.0 / n, SEED, np.uint64(2), rec, out)
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-13, atol=1e-15)


_SCRIPT = """
import numpy as np
from brokerexec.kernels import backend
from brokerexec import sim
from brokerexec.params import preset
p = preset('base-fig')
R = sim.is_reference(p)
st = sim.monte_carlo(p, sim.make_policy('optimal', p, R), R, 200, 100, seed=5)
print(backend())
print(repr(float(st.excess.sum())))
"""


def _run(env_value):
    env = dict(os.environ)
    env.pop("BROKEREXEC_DISABLE_NUMBA", None)
    if env_value is not None:
        env["BROKEREXEC_DISABLE_NUMBA"] = env_value
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    name, total = out.stdout.split()
    return name, float(total)


@needs_numba
def test_env_flag_selects_backend_and_results_agree():
    name_np, tot_np = _run("1")
    name_nb, tot_nb = _run(None)
    assert name_np == "numpy" and name_nb == "numba"
    assert tot_np == pytest.approx(tot_nb, rel=1e-10)


def test_backend_name():
    assert backend() in ("numba", "numpy")
