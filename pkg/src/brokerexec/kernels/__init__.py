"""Hot numerical loops, each with a numba and a pure-numpy implementation.

The numba versions are used when numba is importable and the environment
variable ``BROKEREXEC_DISABLE_NUMBA`` is unset or false. Both versions of
every kernel stay importable (``*_nb`` and ``*_np``) so they can be compared.
"""
import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
_flag = os.environ.get("BROKEREXEC_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, else an identity decorator."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def pick(nb_impl, np_impl):
    return nb_impl if USE_NUMBA else np_impl


logger.debug("kernel backend: %s", backend())
