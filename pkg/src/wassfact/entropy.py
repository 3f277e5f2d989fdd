"""Constrained entropy barriers, their convex conjugates, and primal recovery.

The barrier on a non-negative block is ``E(x) = <x, log(x) - 1>`` plus the
indicator of a normalisation constraint. Conjugate values follow the
closed forms for the unconstrained / simplex / row / column cases, with the
additive constants fixed to zero. The conjugate gradient coincides with the
recovered primal maximiser, which the solver relies on.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import logsumexp


class Constraint(enum.Enum):
    """Normalisation constraint attached to one decomposition block."""

    NONE = "none"
    SIMPLEX = "simplex"  # all entries sum to 1; any order
    ROWS = "rows"  # every row sums to 1; matrices only
    COLUMNS = "columns"  # every column sums to 1; matrices only


def _check_block(V: np.ndarray, constraint: Constraint) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if constraint in (Constraint.ROWS, Constraint.COLUMNS) and V.ndim != 2:
        raise ValueError(f"{constraint.value} constraint requires a matrix, got order {V.ndim}")
    return V


def entropy(x: np.ndarray) -> float:
    """Barrier value ``<x, log(x) - 1>`` with the 0 log 0 = 0 convention."""
    x = np.asarray(x)
    pos = x > 0
    return float(np.sum(x[pos] * (np.log(x[pos]) - 1.0)))


def entropy_conjugate(V: np.ndarray, constraint: Constraint):
    """Conjugate of the constrained entropy barrier.

    Returns ``(value, grad)``; the gradient is the (global / row / column)
    softmax of ``V`` for simplex variants and ``exp(V)`` when unconstrained.
    """
    V = _check_block(V, constraint)
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite conjugate argument")
    if constraint is Constraint.NONE:
        grad = np.exp(V)
        return float(grad.sum()), grad
    if constraint is Constraint.SIMPLEX:
        lse = logsumexp(V)
        return float(lse), np.exp(V - lse)
    axis = 1 if constraint is Constraint.ROWS else 0
    lse = logsumexp(V, axis=axis, keepdims=True)
    return float(lse.sum()), np.exp(V - lse)


def primal_recover(V: np.ndarray, constraint: Constraint) -> np.ndarray:
    """Map a scaled dual argument to the optimal primal block.

    ``exp(V)``, normalised globally / per row / per column as required.
    The output is strictly positive and satisfies the constraint exactly.
    """
    V = _check_block(V, constraint)
    if constraint is Constraint.NONE:
        return np.exp(V)
    if constraint is Constraint.SIMPLEX:
        return np.exp(V - logsumexp(V))
    axis = 1 if constraint is Constraint.ROWS else 0
    return np.exp(V - logsumexp(V, axis=axis, keepdims=True))


def constraint_violation(x: np.ndarray, constraint: Constraint) -> float:
    """Sup-norm deviation of ``x`` from its normalisation constraint."""
    x = _check_block(x, constraint)
    if constraint is Constraint.NONE:
        return 0.0
    if constraint is Constraint.SIMPLEX:
        return abs(float(x.sum()) - 1.0)
    axis = 1 if constraint is Constraint.ROWS else 0
    return float(np.abs(x.sum(axis=axis) - 1.0).max())
