"""Backend selection for the hot kernels.

Every accelerated kernel exists twice: a loop version compiled with
``numba.njit`` and a vectorised pure-numpy version. Both produce identical
integer/bit output. The default backend is numba when it imports, unless the
environment variable ``GRADSKIP_NUMBA`` is set to ``0``/``false``/``off``.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_OFF = {"0", "false", "no", "off"}


def numba_enabled():
    """Whether dispatch defaults to the numba kernels."""
    return HAVE_NUMBA and os.environ.get("GRADSKIP_NUMBA", "1").strip().lower() not in _OFF


def njit(fn):
    """Compile lazily with numba, or return ``fn`` untouched without it."""
    if HAVE_NUMBA:
        return numba.njit(cache=False, nogil=True)(fn)
    return fn


def resolve_backend(backend=None):
    if backend is None:
        return "numba" if numba_enabled() else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
