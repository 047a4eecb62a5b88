"""Counter-based normal generator.

Every draw is a pure function of (seed, path, counter), built from the
SplitMix64 finaliser, so results do not depend on scheduling or on how paths
are split across workers. Normals come from Box-Muller on two uniforms.
"""
import numpy as np

from . import njit, pick

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


def seed_to_u64(seed) -> np.uint64:
    return np.uint64(int(seed) % (1 << 64))


@njit(inline="always")
def mix64_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def path_key_nb(seed, path):
    return mix64_nb(mix64_nb(seed) + (path + _ONE) * GOLDEN)


@njit(inline="always")
def normal_pair_nb(key, step):
    c = np.uint64(step) * _TWO
    z1 = mix64_nb(key + (c + _ONE) * GOLDEN)
    z2 = mix64_nb(key + (c + _TWO) * GOLDEN)
    u1 = (float(z1 >> _S11) + 1.0) * _INV53
    u2 = float(z2 >> _S11) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@njit(nogil=True, cache=True)
def normals_nb(seed, path_start, n_paths, n_steps):
    out1 = np.empty((n_paths, n_steps))
    out2 = np.empty((n_paths, n_steps))
    for p in range(n_paths):
        key = path_key_nb(seed, np.uint64(path_start + p))
        for i in range(n_steps):
            a, b = normal_pair_nb(key, i)
            out1[p, i] = a
            out2[p, i] = b
    return out1, out2


def mix64_np(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys_np(seed, paths):
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_np(mix64_np(np.uint64(seed)) + (paths + _ONE) * GOLDEN)


def normal_pair_np(keys, step):
    c = np.uint64(step) * _TWO
    with np.errstate(over="ignore"):
        z1 = mix64_np(keys + (c + _ONE) * GOLDEN)
        z2 = mix64_np(keys + (c + _TWO) * GOLDEN)
    u1 = ((z1 >> _S11).astype(np.float64) + 1.0) * _INV53
    u2 = (z2 >> _S11).astype(np.float64) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


def normals_np(seed, path_start, n_paths, n_steps):
    keys = path_keys_np(seed, np.arange(path_start, path_start + n_paths, dtype=np.uint64))
    out1 = np.empty((n_paths, n_steps))
    out2 = np.empty((n_paths, n_steps))
    for i in range(n_steps):
        out1[:, i], out2[:, i] = normal_pair_np(keys, i)
    return out1, out2


_normals = pick(normals_nb, normals_np)


def standard_normals(seed, path_start, n_paths, n_steps):
    """Two independent (n_paths, n_steps) arrays of standard normals."""
    return _normals(seed_to_u64(seed), int(path_start), int(n_paths), int(n_steps))
