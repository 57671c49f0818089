"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_pykernels`` are used. Set ``AMDLAB_PURE_PYTHON=1`` to
force the fallback.
"""

import os

import numpy as np

from . import _pykernels

ACT_IDENTITY = _pykernels.ACT_IDENTITY
ACT_SILU = _pykernels.ACT_SILU

_impl = _pykernels
BACKEND = "python"
if os.environ.get("AMDLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def dense_forward(X, W, b, act):
    return _impl.dense_forward(_c(X), _c(W), _c(b), act)


def dense_backward(X, W, Z, G, act):
    return _impl.dense_backward(_c(X), _c(W), _c(Z), _c(G), act)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place Adam step on flat contiguous float64 arrays."""
    _impl.adam_update(p, _c(g), m, v, lr, beta1, beta2, eps, bc1, bc2)


def mixture_eval(X, means, precs, lognorm, logw):
    """Log-density, score and responsibilities of a 2D Gaussian mixture.

    ``means`` are the (already time-scaled) component centers, ``precs`` the
    inverse covariances, ``lognorm`` the per-component Gaussian normalizers.
    """
    return _impl.mixture_eval(_c(X), _c(means), _c(precs), _c(lognorm), _c(logw))


def use_backend(name):
    """Switch backend at runtime (tests and benchmarks only)."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _pykernels, "python"
    elif name == "cython":
        from . import _ckernels

        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")


def cython_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
