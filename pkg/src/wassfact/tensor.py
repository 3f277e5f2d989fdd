"""Dense d-mode tensor algebra: unfoldings, mode products, reconstructions.

Tensors are plain ``numpy.ndarray`` objects. Unfoldings use the standard
Kolda-Bader column ordering: the column index of ``(i_1, ..., i_d)`` with
``i_k`` removed is ``sum_{j != k} i_j * prod_{m != k, m < j} n_m``, i.e. the
remaining indices vary fastest in their original order (Fortran order).
All functions are pure; inputs are never mutated.
"""

from __future__ import annotations

import numpy as np


def matricize(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Unfold ``tensor`` along ``mode`` into an ``n_mode x prod(rest)`` matrix."""
    tensor = np.asarray(tensor)
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for order-{tensor.ndim} tensor")
    return np.reshape(np.moveaxis(tensor, mode, 0), (tensor.shape[mode], -1), order="F")


def tensorize(matrix: np.ndarray, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`matricize`: fold a matrix back to the given shape."""
    matrix = np.asarray(matrix)
    shape = tuple(int(n) for n in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = [n for i, n in enumerate(shape) if i != mode]
    expected = (shape[mode], int(np.prod(rest, dtype=np.int64)))
    if matrix.shape != expected:
        raise ValueError(f"matrix shape {matrix.shape} inconsistent with {expected}")
    unfolded = np.reshape(matrix, (shape[mode], *rest), order="F")
    return np.moveaxis(unfolded, 0, mode)


def mode_product(tensor: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` product ``tensor x_mode matrix``.

    Contracts index ``mode`` of the tensor against the columns of ``matrix``,
    resizing that mode to ``matrix.shape[0]``.
    """
    tensor = np.asarray(tensor)
    matrix = np.asarray(matrix)
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for order-{tensor.ndim} tensor")
    if matrix.ndim != 2 or matrix.shape[1] != tensor.shape[mode]:
        raise ValueError(
            f"matrix shape {matrix.shape} cannot contract mode {mode} of size "
            f"{tensor.shape[mode]}"
        )
    moved = np.moveaxis(tensor, mode, 0)
    contracted = np.tensordot(matrix, moved, axes=([1], [0]))
    return np.moveaxis(contracted, 0, mode)


def multi_mode_product(tensor: np.ndarray, matrices) -> np.ndarray:
    """Apply ``(matrix, mode)`` pairs sequentially; modes must be distinct.

    The result is order-independent; internally matrices are applied in
    ascending mode order for determinism.
    """
    modes = [mode for _, mode in matrices]
    if len(set(modes)) != len(modes):
        raise ValueError(f"repeated mode in {modes}")
    out = np.asarray(tensor)
    for matrix, mode in sorted(matrices, key=lambda pair: pair[1]):
        out = mode_product(out, matrix, mode)
    return out


def tucker_reconstruct(core: np.ndarray, factors) -> np.ndarray:
    """Multiply ``core`` by every factor matrix: ``core x_1 A1 x_2 ... x_d Ad``."""
    core = np.asarray(core)
    if len(factors) != core.ndim:
        raise ValueError(f"{len(factors)} factors for an order-{core.ndim} core")
    return multi_mode_product(core, [(A, k) for k, A in enumerate(factors)])


def superdiagonal(order: int, rank: int) -> np.ndarray:
    """Order-``order`` tensor with ones on the superdiagonal, zero elsewhere."""
    core = np.zeros((rank,) * order)
    idx = np.arange(rank)
    core[(idx,) * order] = 1.0
    return core


def cp_reconstruct(factors) -> np.ndarray:
    """Sum of rank-1 terms from the shared columns of the factor matrices.

    Equivalent to :func:`tucker_reconstruct` with a superdiagonal core of ones.
    """
    ranks = {np.asarray(A).shape[1] for A in factors}
    if len(ranks) != 1:
        raise ValueError(f"factor column counts differ: {sorted(ranks)}")
    (rank,) = ranks
    return tucker_reconstruct(superdiagonal(len(factors), rank), factors)


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of elementwise products of two identically shaped tensors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))
