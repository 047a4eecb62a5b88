"""Backward fixed-step RK4 for scalar linear ODEs y' = p(t) y + f(t)."""
import numpy as np

from . import njit, pick


@njit(nogil=True, cache=True)
def rk4_linear_backward_nb(t, p_a, p_m, p_b, f_a, f_m, f_b, y_end, k1_end):
    """Integrate from t[-1] down to t[0].

    Coefficients are given per interval j = [t[j], t[j+1]] at its start (a),
    midpoint (m) and end (b), as one-sided values from inside the interval.
    If ``k1_end`` is finite it replaces the first stage on the last interval
    (used when p is singular at the terminal time).
    """
    n = t.shape[0]
    y = np.empty(n)
    y[n - 1] = y_end
    for j in range(n - 2, -1, -1):
        h = t[j] - t[j + 1]
        yb = y[j + 1]
        if j == n - 2 and np.isfinite(k1_end):
            k1 = k1_end
        else:
            k1 = p_b[j] * yb + f_b[j]
        k2 = p_m[j] * (yb + 0.5 * h * k1) + f_m[j]
        k3 = p_m[j] * (yb + 0.5 * h * k2) + f_m[j]
        k4 = p_a[j] * (yb + h * k3) + f_a[j]
        y[j] = yb + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return y


def rk4_linear_backward_np(t, p_a, p_m, p_b, f_a, f_m, f_b, y_end, k1_end):
    # the recursion is inherently sequential; plain floats keep it fast
    t, p_a, p_m, p_b, f_a, f_m, f_b = (np.asarray(a, float).tolist()
                                       for a in (t, p_a, p_m, p_b, f_a, f_m, f_b))
    n = len(t)
    y = [0.0] * n
    y[-1] = float(y_end)
    special = np.isfinite(k1_end)
    for j in range(n - 2, -1, -1):
        h = t[j] - t[j + 1]
        yb = y[j + 1]
        k1 = k1_end if (special and j == n - 2) else p_b[j] * yb + f_b[j]
        k2 = p_m[j] * (yb + 0.5 * h * k1) + f_m[j]
        k3 = p_m[j] * (yb + 0.5 * h * k2) + f_m[j]
        k4 = p_a[j] * (yb + h * k3) + f_a[j]
        y[j] = yb + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return np.array(y)


rk4_linear_backward = pick(rk4_linear_backward_nb, rk4_linear_backward_np)
