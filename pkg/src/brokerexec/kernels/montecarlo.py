"""Path simulation loops for affine feedback policies v = g1 (x - A) + g0."""
import math

import numpy as np

from . import njit, pick
from .rng import normal_pair_nb, normal_pair_np, path_key_nb, path_keys_np

# columns of the terminal array
PNL, PNL_ITO, PNL_REF, X_T = range(4)
N_TERMINAL = 4


@njit(nogil=True, cache=True)
def simulate_nb(g1, g0, ref_dev, dt, x0, A, S0, mu, sigma, gamma, eta, beta, m0, rho,
                seed, path_start, rec_idx, terminal, rec_x, rec_S, rec_v, bad_step):
    n = g1.shape[0]
    n_paths = terminal.shape[0]
    nrec = rec_idx.shape[0]
    sq = math.sqrt(dt)
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    dev0 = x0 - A
    for p in range(n_paths):
        key = path_key_nb(seed, np.uint64(path_start + p))
        x = x0
        S = S0
        cash = 0.0
        ito = 0.0
        ref = 0.0
        r = 0
        bad_step[p] = -1
        for i in range(n):
            dev = x - A
            v = g1[i] * dev + g0[i]
            while r < nrec and rec_idx[r] == i:
                rec_x[p, r] = x
                rec_S[p, r] = S
                rec_v[p, r] = v
                r += 1
            z1, z2 = normal_pair_nb(key, i)
            dW = sq * z1
            dZ = rho * dW + rc * sq * z2
            x_new = x - v * dt + m0 * dZ
            dx = x_new - x
            cash -= (S - eta * v) * dx
            ito += ((mu * dev + rho * sigma * m0 - eta * v * v - gamma * v * dev
                     + gamma * m0 * m0) * dt
                    + sigma * dev * dW + (eta * v + gamma * dev) * m0 * dZ)
            ref += ref_dev[i] * (mu * dt + sigma * dW)
            S = S + mu * dt + gamma * dx + sigma * dW
            x = x_new
            if not (math.isfinite(x) and math.isfinite(S) and math.isfinite(cash)):
                bad_step[p] = i
                break
        while r < nrec and rec_idx[r] == n:
            rec_x[p, r] = x
            rec_S[p, r] = S
            rec_v[p, r] = math.nan
            r += 1
        dev = x - A
        pen = beta * dev * dev
        terminal[p, 0] = dev * S - pen + cash
        terminal[p, 1] = dev0 * S0 - pen + ito
        terminal[p, 2] = dev0 * S0 + ref
        terminal[p, 3] = x


def simulate_np(g1, g0, ref_dev, dt, x0, A, S0, mu, sigma, gamma, eta, beta, m0, rho,
                seed, path_start, rec_idx, terminal, rec_x, rec_S, rec_v, bad_step):
    n = len(g1)
    n_paths = terminal.shape[0]
    keys = path_keys_np(seed, np.arange(path_start, path_start + n_paths, dtype=np.uint64))
    sq = math.sqrt(dt)
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    dev0 = x0 - A
    x = np.full(n_paths, float(x0))
    S = np.full(n_paths, float(S0))
    cash = np.zeros(n_paths)
    ito = np.zeros(n_paths)
    ref = np.zeros(n_paths)
    bad_step[:] = -1
    alive = np.ones(n_paths, dtype=bool)
    rec_pos = {int(k): j for j, k in enumerate(rec_idx)}
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            dev = x - A
            v = g1[i] * dev + g0[i]
            if i in rec_pos:
                j = rec_pos[i]
                rec_x[:, j] = x
                rec_S[:, j] = S
                rec_v[:, j] = v
            z1, z2 = normal_pair_np(keys, i)
            dW = sq * z1
            dZ = rho * dW + rc * sq * z2
            x_new = x - v * dt + m0 * dZ
            dx = x_new - x
            cash_new = cash - (S - eta * v) * dx
            ito_new = ito + ((mu * dev + rho * sigma * m0 - eta * v * v - gamma * v * dev
                              + gamma * m0 * m0) * dt
                             + sigma * dev * dW + (eta * v + gamma * dev) * m0 * dZ)
            ref_new = ref + ref_dev[i] * (mu * dt + sigma * dW)
            S_new = S + mu * dt + gamma * dx + sigma * dW
            # freeze paths that already failed, as the scalar loop does
            x = np.where(alive, x_new, x)
            S = np.where(alive, S_new, S)
            cash = np.where(alive, cash_new, cash)
            ito = np.where(alive, ito_new, ito)
            ref = np.where(alive, ref_new, ref)
            newly_bad = alive & ~(np.isfinite(x) & np.isfinite(S) & np.isfinite(cash))
            bad_step[newly_bad] = i
            alive &= ~newly_bad
    if n in rec_pos:
        j = rec_pos[n]
        rec_x[:, j] = x
        rec_S[:, j] = S
        rec_v[:, j] = np.nan
    dev = x - A
    pen = beta * dev * dev
    terminal[:, 0] = dev * S - pen + cash
    terminal[:, 1] = dev0 * S0 - pen + ito
    terminal[:, 2] = dev0 * S0 + ref
    terminal[:, 3] = x


simulate = pick(simulate_nb, simulate_np)


@njit(nogil=True, cache=True)
def bridge_nb(is_vals, decay, x0, m0, rho, dt, seed, path_start, rec_idx, out):
    """IS path plus a discretised OU bridge driven by the same dZ as ``simulate``.

    y_{i+1} = decay_i (y_i + dZ_i) with decay_i = sinh k(T-t_{i+1}) / sinh k(T-t_i),
    which equals the left-point sum of the bridge kernel times dZ.
    """
    n = decay.shape[0]
    n_paths = out.shape[0]
    nrec = rec_idx.shape[0]
    sq = math.sqrt(dt)
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    for p in range(n_paths):
        key = path_key_nb(seed, np.uint64(path_start + p))
        y = 0.0
        r = 0
        for i in range(n + 1):
            while r < nrec and rec_idx[r] == i:
                out[p, r] = is_vals[i] * x0 + m0 * y
                r += 1
            if i == n:
                break
            z1, z2 = normal_pair_nb(key, i)
            dW = sq * z1
            dZ = rho * dW + rc * sq * z2
            y = decay[i] * (y + dZ)


def bridge_np(is_vals, decay, x0, m0, rho, dt, seed, path_start, rec_idx, out):
    n = len(decay)
    n_paths = out.shape[0]
    keys = path_keys_np(seed, np.arange(path_start, path_start + n_paths, dtype=np.uint64))
    sq = math.sqrt(dt)
    rc = math.sqrt(max(0.0, 1.0 - rho * rho))
    rec_pos = {}
    for j, k in enumerate(rec_idx):
        rec_pos.setdefault(int(k), []).append(j)
    y = np.zeros(n_paths)
    for i in range(n + 1):
        for j in rec_pos.get(i, ()):
            out[:, j] = is_vals[i] * x0 + m0 * y
        if i == n:
            break
        z1, z2 = normal_pair_np(keys, i)
        dW = sq * z1
        dZ = rho * dW + rc * sq * z2
        y = decay[i] * (y + dZ)


bridge = pick(bridge_nb, bridge_np)
