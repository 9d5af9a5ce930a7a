"""Kernel backend selection.

The environment variable ``KREV_BACKEND`` picks the permutation kernels:
``numba`` (JIT, default when importable), ``numpy`` (pure-numpy fallback).
"""

import os

_CHOICE = os.environ.get("KREV_BACKEND", "auto").lower()

if _CHOICE not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"KREV_BACKEND must be 'numba' or 'numpy', got {_CHOICE!r}")

if _CHOICE in ("auto", "numba"):
    try:
        from . import _kernels_numba as _kernels

        BACKEND = "numba"
    except ImportError:
        if _CHOICE == "numba":
            raise
        from . import _kernels_numpy as _kernels

        BACKEND = "numpy"
else:
    from . import _kernels_numpy as _kernels

    BACKEND = "numpy"

permute = _kernels.permute
permute_batch = _kernels.permute_batch
absorb_block = _kernels.absorb_block
absorb_block_batch = _kernels.absorb_block_batch


def backend_name():
    return BACKEND


def load_kernels(name):
    """Explicit kernel module lookup, used by the benchmark command."""
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    if name == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    raise ValueError(f"unknown backend {name!r}")


def activate(name):
    """Swap the active kernels at runtime (benchmark and test use only)."""
    global permute, permute_batch, absorb_block, absorb_block_batch, BACKEND
    kernels = load_kernels(name)
    permute = kernels.permute
    permute_batch = kernels.permute_batch
    absorb_block = kernels.absorb_block
    absorb_block_batch = kernels.absorb_block_batch
    BACKEND = name
