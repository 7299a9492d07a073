"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``QOTLIMIT_BACKEND=python``
to force the numpy fallback (the test-suite runs both).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def _pick():
    wanted = os.environ.get("QOTLIMIT_BACKEND", "").strip().lower()
    if wanted:
        return wanted, get_backend(wanted)
    if _ckernels is not None:
        return "cython", _ckernels
    return "python", _pykernels


BACKEND, _active = _pick()

row_roots = _active.row_roots
plan_moments = _active.plan_moments
plan_entries = _active.plan_entries
