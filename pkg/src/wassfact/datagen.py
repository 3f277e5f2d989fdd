"""Simulated histogram datasets and evaluation metrics.

Randomness uses ``numpy.random.default_rng`` (PCG64) with explicit seeds, so
generation is bit-reproducible across platforms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from wassfact.tensor import cp_reconstruct, tucker_reconstruct


@dataclass(frozen=True)
class AtomSpec:
    """A discretised univariate Gaussian atom on a regular grid."""

    n: int
    domain: tuple = (0.0, 1.0)
    mean: float = 0.5
    std: float = 0.1

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")
        if self.n < 2:
            raise ValueError("need at least two grid points")


def gaussian_atom(spec: AtomSpec) -> np.ndarray:
    """Pointwise Gaussian density on the grid, normalised to sum to one."""
    x = np.linspace(spec.domain[0], spec.domain[1], spec.n)
    density = np.exp(-0.5 * ((x - spec.mean) / spec.std) ** 2)
    return density / density.sum()


def separable_mixture(atoms_per_component, weights) -> np.ndarray:
    """Weighted sum of separable terms: ``sum_i w_i a_i1 (x) ... (x) a_id``.

    ``atoms_per_component[i]`` is the list of per-mode vectors of component i.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(atoms_per_component) != weights.size:
        raise ValueError("one weight per component required")
    orders = {len(atoms) for atoms in atoms_per_component}
    if len(orders) != 1:
        raise ValueError("components must share the number of modes")
    factors = [
        np.column_stack([np.asarray(atoms[mode], dtype=np.float64)
                         for atoms in atoms_per_component])
        for mode in range(orders.pop())
    ]
    factors[0] = factors[0] * weights[None, :]
    return cp_reconstruct(factors)


def empirical_sample(X_true: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Empirical histogram of ``count`` iid draws from a probability tensor."""
    X_true = np.asarray(X_true, dtype=np.float64)
    if count <= 0:
        raise ValueError("sample count must be positive")
    if abs(X_true.sum() - 1.0) > 1e-8:
        raise ValueError("X_true must sum to one")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(count, X_true.ravel() / X_true.sum())
    return counts.reshape(X_true.shape) / count


def shifted_slice_dataset(base_atoms, n_slices: int, shift_std: float,
                          seed: int) -> np.ndarray:
    """Stack of normalised 2-D mixtures with per-slice random mean shifts.

    ``base_atoms`` is a list of ``(alpha_spec, beta_spec)`` pairs; slice i is
    ``Z_i^-1 sum_k alpha_k^(i) (x) beta_k^(i)`` where each atom's mean is
    translated by an independent Normal(0, shift_std) draw.
    """
    rng = np.random.default_rng(seed)
    first = base_atoms[0][0]
    out = np.empty((n_slices, first.n, base_atoms[0][1].n))
    for i in range(n_slices):
        slab = np.zeros_like(out[0])
        for alpha_spec, beta_spec in base_atoms:
            da, db = rng.normal(0.0, shift_std, size=2)
            a = gaussian_atom(AtomSpec(alpha_spec.n, alpha_spec.domain,
                                       alpha_spec.mean + da, alpha_spec.std))
            b = gaussian_atom(AtomSpec(beta_spec.n, beta_spec.domain,
                                       beta_spec.mean + db, beta_spec.std))
            slab += np.outer(a, b)
        out[i] = slab / slab.sum()
    return out


def default_atom_specs(n: int, domain=(0.0, 1.0), count: int = 3):
    """Well-separated Gaussians: means at even interior fractions of the
    domain, std 5% of its width. Implementation defaults, config-overridable.
    """
    a, b = domain
    width = b - a
    means = [a + width * (i + 1) / (count + 1) for i in range(count)]
    return [AtomSpec(n, domain, mean, 0.05 * width) for mean in means]


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance, half the L1 distance."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def atom_match_score(learned: np.ndarray, truth: np.ndarray):
    """Optimal one-to-one matching of atom columns by total TV distance.

    Exhaustive over permutations for up to 6 atoms, greedy beyond. Returns
    ``(assignment, distances)`` where ``assignment[i]`` is the learned column
    matched to truth column ``i``.
    """
    learned = np.asarray(learned, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if learned.shape != truth.shape:
        raise ValueError(f"atom count/shape mismatch: {learned.shape} vs {truth.shape}")
    r = truth.shape[1]
    pair_tv = np.array([[tv_distance(truth[:, i], learned[:, j])
                         for j in range(r)] for i in range(r)])
    if r <= 6:
        assignment = min(itertools.permutations(range(r)),
                         key=lambda perm: sum(pair_tv[i, perm[i]] for i in range(r)))
    else:
        assignment, used = [], set()
        for i in range(r):
            j = min((j for j in range(r) if j not in used), key=lambda j: pair_tv[i, j])
            used.add(j)
            assignment.append(j)
        assignment = tuple(assignment)
    distances = np.array([pair_tv[i, assignment[i]] for i in range(r)])
    return assignment, distances


def reconstruction_metrics(X: np.ndarray, model, cfg=None) -> dict:
    """Relative Frobenius error of the model fit, plus the monitored OT loss
    when a solver config is supplied."""
    from wassfact.solver import monitored_loss

    X = np.asarray(X, dtype=np.float64)
    reconstruction = tucker_reconstruct(model.core, model.factors)
    if reconstruction.shape != X.shape:
        raise ValueError(f"shape mismatch: {reconstruction.shape} vs {X.shape}")
    metrics = {
        "frobenius_rel_error": float(
            np.linalg.norm(X - reconstruction) / np.linalg.norm(X)
        )
    }
    if cfg is not None:
        metrics["monitored_loss"] = monitored_loss(X, reconstruction, cfg)
    return metrics
