"""Stable log-domain contractions, the hot kernels of every gradient.

``logmatmulexp(L, M)[i, r] = log sum_j exp(L[i, j] + M[j, r])``
``logmodeexp(L, T)[a, i, c] = log sum_j exp(L[i, j] + T[a, j, c])``

The 3-D form contracts the middle axis of a tensor reshaped to
``(leading, n, trailing)``, which lets per-mode kernel convolutions run
without transposing the operand. Two interchangeable implementations exist:
a compiled Cython kernel and a chunked NumPy broadcast. The compiled one is
selected at import when the extension built; set ``WASSFACT_PURE_PYTHON=1``
to force the fallback. Both use an exact per-output-entry max shift, so
results stay accurate for log-kernels as peaked as ``-C/epsilon`` with
``epsilon ~ 1e-3``.
"""

from __future__ import annotations

import os

import numpy as np

# Cap on temporary broadcast buffers in the NumPy path (doubles).
_CHUNK_BUDGET = 2**22


def logmodeexp_numpy(L: np.ndarray, T: np.ndarray) -> np.ndarray:
    """NumPy implementation of the middle-axis log-domain contraction."""
    L = np.ascontiguousarray(L, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    if L.ndim != 2 or T.ndim != 3 or T.shape[1] != L.shape[1]:
        raise ValueError(f"cannot contract shapes {L.shape} and {T.shape}")
    m, n = L.shape
    batch, _, rest = T.shape
    out = np.empty((batch, m, rest))
    # chunk the trailing axis first, then the batch axis, so the broadcast
    # buffer (b, m, n, r) stays within the budget for any input shape
    rest_step = max(1, _CHUNK_BUDGET // max(1, m * n))
    batch_step = max(1, _CHUNK_BUDGET // max(1, m * n * min(rest, rest_step)))
    broad = L[None, :, :, None]  # (1, m, n, 1)
    for lo in range(0, batch, batch_step):
        for left in range(0, rest, rest_step):
            block = broad + T[lo : lo + batch_step, None, :,
                              left : left + rest_step]  # (b, m, n, r)
            hi = block.max(axis=2)
            hi_safe = np.where(np.isfinite(hi), hi, 0.0)
            with np.errstate(divide="ignore"):
                out[lo : lo + batch_step, :, left : left + rest_step] = (
                    hi_safe
                    + np.log(np.exp(block - hi_safe[:, :, None, :]).sum(axis=2))
                )
    return out


def logmatmulexp_numpy(L: np.ndarray, M: np.ndarray) -> np.ndarray:
    """NumPy implementation of the log-domain matrix product."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    return logmodeexp_numpy(L, M[None, :, :])[0]


if os.environ.get("WASSFACT_PURE_PYTHON"):
    _impl = None
else:
    try:
        from wassfact import _lse as _impl
    except ImportError:
        _impl = None

HAVE_COMPILED_KERNEL = _impl is not None

if HAVE_COMPILED_KERNEL:

    def logmodeexp(L: np.ndarray, T: np.ndarray) -> np.ndarray:
        L = np.ascontiguousarray(L, dtype=np.float64)
        T = np.ascontiguousarray(T, dtype=np.float64)
        if L.ndim != 2 or T.ndim != 3 or T.shape[1] != L.shape[1]:
            raise ValueError(f"cannot contract shapes {L.shape} and {T.shape}")
        return _impl.logmodeexp(L, T)

    def logmatmulexp(L: np.ndarray, M: np.ndarray) -> np.ndarray:
        L = np.ascontiguousarray(L, dtype=np.float64)
        M = np.ascontiguousarray(M, dtype=np.float64)
        if L.ndim != 2 or M.ndim != 2 or L.shape[1] != M.shape[0]:
            raise ValueError(f"cannot contract shapes {L.shape} and {M.shape}")
        return _impl.logmatmulexp(L, M)

    logmodeexp.__doc__ = "Compiled middle-axis log-domain contraction."
    logmatmulexp.__doc__ = "Compiled log-domain matrix product."
else:
    logmodeexp = logmodeexp_numpy
    logmatmulexp = logmatmulexp_numpy
