"""Kernel backend selection.

The fused sequence kernels exist twice: a Cython extension compiled at
install time (``liquidlab._ckernels``) and a pure-numpy fallback
(``liquidlab._kernels_np``).  The compiled one is picked automatically when
importable; :func:`set_backend` switches explicitly, which the tests and
``benchmarks/bench_kernels.py`` use to compare the two.

Both backends implement the same contract and are cross-checked in the test
suite; results agree to ~1e-12 but are not bitwise identical (numpy's
vectorized transcendentals differ from libm in the last ulp).
"""

from __future__ import annotations

from . import _kernels_np

_BACKENDS = {"numpy": _kernels_np}

try:
    from . import _ckernels
    _BACKENDS["compiled"] = _ckernels
    _active = "compiled"
except ImportError:
    _active = "numpy"


def available_backends():
    return tuple(sorted(_BACKENDS))


def get_backend() -> str:
    return _active


def set_backend(name: str):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; "
                         f"have {available_backends()}")
    _active = name


def seq_forward(*args, **kwargs):
    return _BACKENDS[_active].seq_forward(*args, **kwargs)


def seq_backward(*args, **kwargs):
    return _BACKENDS[_active].seq_backward(*args, **kwargs)
