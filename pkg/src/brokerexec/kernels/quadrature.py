"""Green's-kernel quadrature for zero-execution-risk trajectories.

Computes K(t) = int_0^T G(s, t) R(s) ds with
G(s, t) = kappa sinh(kappa min(s,t)) sinh(kappa (T - max(s,t))) / sinh(kappa T),
for piecewise-linear R. Each linear piece of R gets its own Simpson rule;
the piece containing t is split at t because G has a kink there.
"""
import math

import numpy as np

from . import njit, pick


def green_np(s, t, kappa, T):
    """G(s, t) in exponentially scaled form (finite for any kappa T)."""
    a = np.minimum(s, t)
    b = T - np.maximum(s, t)
    den = -2.0 * np.expm1(-2.0 * kappa * T)
    return (kappa * np.exp(-kappa * np.abs(t - s))
            * (-np.expm1(-2.0 * kappa * a)) * (-np.expm1(-2.0 * kappa * b)) / den)


@njit(inline="always")
def _green_nb(s, t, kappa, T, den):
    a = min(s, t)
    b = T - max(s, t)
    return (kappa * math.exp(-kappa * abs(t - s))
            * (-math.expm1(-2.0 * kappa * a)) * (-math.expm1(-2.0 * kappa * b)) / den)


def n_simpson(length, h_target):
    """Even number of Simpson subintervals for a piece of the given length."""
    return 2 * max(1, int(math.ceil(length / (2.0 * h_target))))


def fixed_nodes(breaks, r0, r1, h_target):
    """Simpson nodes, weights times R, and piece index for every whole piece."""
    s_all, w_all, seg_all = [], [], []
    for j in range(len(r0)):
        lo, hi = breaks[j], breaks[j + 1]
        m = n_simpson(hi - lo, h_target)
        s = np.linspace(lo, hi, m + 1)
        w = np.full(m + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= (hi - lo) / (3.0 * m)
        r = r0[j] + (r1[j] - r0[j]) * (s - lo) / (hi - lo)
        s_all.append(s)
        w_all.append(w * r)
        seg_all.append(np.full(m + 1, j, dtype=np.int64))
    return np.concatenate(s_all), np.concatenate(w_all), np.concatenate(seg_all)


@njit(nogil=True, cache=True)
def kernel_integral_nb(t_out, breaks, r0, r1, s_all, wr_all, seg_all, kappa, T, h_target):
    den = -2.0 * math.expm1(-2.0 * kappa * T)
    nseg = r0.shape[0]
    out = np.empty(t_out.shape[0])
    for i in range(t_out.shape[0]):
        t = t_out[i]
        jt = -1
        for j in range(nseg):
            if breaks[j] < t < breaks[j + 1]:
                jt = j
                break
        total = 0.0
        for k in range(s_all.shape[0]):
            if seg_all[k] != jt:
                total += wr_all[k] * _green_nb(s_all[k], t, kappa, T, den)
        if jt >= 0:
            blo = breaks[jt]
            bhi = breaks[jt + 1]
            for q in range(2):
                lo = blo if q == 0 else t
                hi = t if q == 0 else bhi
                m = 2 * max(1, int(math.ceil((hi - lo) / (2.0 * h_target))))
                hh = (hi - lo) / m
                acc = 0.0
                for k in range(m + 1):
                    s = hi if k == m else lo + k * hh
                    w = 1.0 if (k == 0 or k == m) else (4.0 if k % 2 == 1 else 2.0)
                    r = r0[jt] + (r1[jt] - r0[jt]) * (s - blo) / (bhi - blo)
                    acc += w * r * _green_nb(s, t, kappa, T, den)
                total += acc * hh / 3.0
        out[i] = total
    return out


def kernel_integral_np(t_out, breaks, r0, r1, s_all, wr_all, seg_all, kappa, T, h_target):
    out = np.empty(len(t_out))
    inner = (breaks[:-1], breaks[1:])
    for i, t in enumerate(t_out):
        hit = np.nonzero((inner[0] < t) & (t < inner[1]))[0]
        jt = int(hit[0]) if hit.size else -1
        mask = seg_all != jt
        total = float(np.sum(wr_all[mask] * green_np(s_all[mask], t, kappa, T)))
        if jt >= 0:
            blo, bhi = breaks[jt], breaks[jt + 1]
            for lo, hi in ((blo, t), (t, bhi)):
                m = n_simpson(hi - lo, h_target)
                hh = (hi - lo) / m
                s = lo + np.arange(m + 1) * hh
                s[-1] = hi
                w = np.full(m + 1, 2.0)
                w[1::2] = 4.0
                w[0] = w[-1] = 1.0
                r = r0[jt] + (r1[jt] - r0[jt]) * (s - blo) / (bhi - blo)
                total += float(np.sum(w * r * green_np(s, t, kappa, T))) * hh / 3.0
        out[i] = total
    return out


_kernel_integral = pick(kernel_integral_nb, kernel_integral_np)


def kernel_integral(t_out, breaks, r0, r1, kappa, T, n_quad=2000):
    """K(t) at every point of ``t_out``; ``n_quad`` sets the node density over [0, T]."""
    t_out = np.ascontiguousarray(t_out, dtype=float)
    breaks = np.ascontiguousarray(breaks, dtype=float)
    r0 = np.ascontiguousarray(r0, dtype=float)
    r1 = np.ascontiguousarray(r1, dtype=float)
    h = T / float(n_quad)
    s_all, wr_all, seg_all = fixed_nodes(breaks, r0, r1, h)
    return _kernel_integral(t_out, breaks, r0, r1, s_all, wr_all, seg_all,
                            float(kappa), float(T), h)
