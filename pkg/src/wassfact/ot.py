"""Entropic optimal transport machinery in the log domain.

Covers ground-cost construction, factored Gibbs kernels, the balanced and
semi-unbalanced conjugate losses with closed-form gradients, and Sinkhorn
evaluators used only to monitor primal objective values. The full 2d-mode
kernel is never materialised: convolving with it is a sequence of per-mode
log-sum-exp contractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wassfact.kernels import logmodeexp


class DomainViolation(Exception):
    """A semi-unbalanced dual argument reached the pole ``u >= lam``.

    The inner optimizer treats this as an infeasible trial point and
    backtracks; the conjugate itself stays stateless.
    """


def build_grid_cost(n: int, domain=(0.0, 1.0), exponent: float = 2.0,
                    normalize_unit_mean: bool = False) -> np.ndarray:
    """Ground cost ``|x_i - x_j|^p`` on a regular grid over ``domain``.

    With ``normalize_unit_mean`` the matrix is divided by its mean entry.
    """
    if n < 1:
        raise ValueError("grid size must be positive")
    a, b = domain
    if not a < b:
        raise ValueError(f"empty domain [{a}, {b}]")
    x = np.linspace(a, b, n)
    cost = np.abs(x[:, None] - x[None, :]) ** exponent
    if normalize_unit_mean:
        cost = cost / cost.mean()
    return cost


@dataclass(frozen=True)
class GibbsKernel:
    """Factored Gibbs kernel: per-mode log matrices ``-C^(k)/epsilon``."""

    log_modes: tuple
    epsilon: float

    @property
    def shape(self):
        return tuple(L.shape[0] for L in self.log_modes)


def gibbs_kernel(costs, epsilon: float) -> GibbsKernel:
    """Build the factored kernel from per-mode cost matrices."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    logs = []
    for C in costs:
        C = np.asarray(C, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError(f"cost matrix must be square, got {C.shape}")
        logs.append(-C / epsilon)
    return GibbsKernel(tuple(logs), float(epsilon))


def kernel_apply_log(kernel: GibbsKernel, log_tensor: np.ndarray,
                     transpose: bool = False) -> np.ndarray:
    """Compute ``log(K exp(log_tensor))`` mode by mode.

    Entries of ``log_tensor`` may be ``-inf`` (zero mass). ``transpose``
    applies ``K^T`` instead, i.e. the transposed per-mode matrices.
    """
    T = np.ascontiguousarray(log_tensor, dtype=np.float64)
    if T.shape != kernel.shape:
        raise ValueError(f"tensor shape {T.shape} does not match kernel {kernel.shape}")
    shape = list(T.shape)
    for mode, L in enumerate(kernel.log_modes):
        if transpose:
            L = np.ascontiguousarray(L.T)
        lead = int(np.prod(shape[:mode], dtype=np.int64))
        trail = int(np.prod(shape[mode + 1 :], dtype=np.int64))
        T = logmodeexp(L, T.reshape(lead, shape[mode], trail))
        shape[mode] = L.shape[0]
        T = T.reshape(shape)
    return T


def _masked_entropy_pairing(alpha, log_alpha, log_ka, epsilon):
    # -eps <alpha, log(alpha / Ka) - 1>, skipping zero-mass cells.
    pos = alpha > 0
    return -epsilon * float(
        np.sum(alpha[pos] * (log_alpha[pos] - log_ka[pos] - 1.0))
    )


def _log_nonneg(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def ot_conjugate_balanced(alpha: np.ndarray, U: np.ndarray, kernel: GibbsKernel):
    """Conjugate of the balanced entropic OT loss in its second argument.

    Returns ``(value, grad)`` where ``grad`` is the maximising marginal
    ``beta* = e^{U/eps} * K^T (alpha / K e^{U/eps})`` (strictly positive).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if alpha.shape != U.shape:
        raise ValueError(f"shape mismatch: {alpha.shape} vs {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("non-finite dual argument")
    if not np.any(alpha > 0):
        raise ValueError("first marginal has no mass")
    eps = kernel.epsilon
    log_alpha = _log_nonneg(alpha)
    log_ku = kernel_apply_log(kernel, U / eps)
    value = _masked_entropy_pairing(alpha, log_alpha, log_ku, eps)
    log_grad = U / eps + kernel_apply_log(kernel, log_alpha - log_ku, transpose=True)
    return value, np.exp(log_grad)


def ot_conjugate_semiunbalanced(alpha: np.ndarray, U: np.ndarray,
                                kernel: GibbsKernel, lam: float):
    """Conjugate of the semi-unbalanced OT loss (KL strength ``lam``).

    Uses ``f(u) = (lam / (lam - u))^(lam/eps)`` evaluated in the log domain;
    raises :class:`DomainViolation` if any entry of ``U`` reaches ``lam``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if alpha.shape != U.shape:
        raise ValueError(f"shape mismatch: {alpha.shape} vs {U.shape}")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if not np.any(alpha > 0):
        raise ValueError("first marginal has no mass")
    if not np.all(U < lam):
        raise DomainViolation(f"dual argument reached the pole u >= lam = {lam}")
    eps = kernel.epsilon
    log_ratio = np.log(lam) - np.log(lam - U)  # log(lam / (lam - u))
    log_f = (lam / eps) * log_ratio
    log_alpha = _log_nonneg(alpha)
    log_kf = kernel_apply_log(kernel, log_f)
    value = _masked_entropy_pairing(alpha, log_alpha, log_kf, eps)
    log_grad = log_ratio + log_f + kernel_apply_log(
        kernel, log_alpha - log_kf, transpose=True
    )
    return value, np.exp(log_grad)


@dataclass(frozen=True)
class LossSpec:
    """Choice of conjugate OT loss.

    ``mode`` is ``"tensor"`` (one transport problem on the whole tensor with
    the factored product-metric kernel) or ``"slices"`` (a sum of transport
    problems over slices along ``axis``, each using ``kernel`` on the
    remaining modes). ``lam = inf`` selects the balanced loss.
    """

    kernel: GibbsKernel
    lam: float = np.inf
    mode: str = "tensor"
    axis: int = 0

    def __post_init__(self):
        if self.mode not in ("tensor", "slices"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")

    @property
    def balanced(self) -> bool:
        return np.isinf(self.lam)


def _conjugate(alpha, U, kernel, lam):
    if np.isinf(lam):
        return ot_conjugate_balanced(alpha, U, kernel)
    return ot_conjugate_semiunbalanced(alpha, U, kernel, lam)


def loss_conjugate(X: np.ndarray, U: np.ndarray, spec: LossSpec):
    """Conjugate ``Phi*(X, U)`` of the configured loss, with gradient."""
    X = np.asarray(X, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if X.shape != U.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {U.shape}")
    if spec.mode == "tensor":
        return _conjugate(X, U, spec.kernel, spec.lam)
    axis = spec.axis
    if not 0 <= axis < X.ndim:
        raise ValueError(f"slice axis {axis} out of range")
    X_slices = np.moveaxis(X, axis, 0)
    U_slices = np.moveaxis(U, axis, 0)
    value = 0.0
    grad = np.empty_like(X_slices)
    for i in range(X_slices.shape[0]):
        v, g = _conjugate(X_slices[i], U_slices[i], spec.kernel, spec.lam)
        value += v
        grad[i] = g
    return value, np.moveaxis(grad, 0, axis)


@dataclass
class SinkhornResult:
    """Outcome of a Sinkhorn evaluation (monitoring only)."""

    value: float
    residual: float
    iterations: int
    converged: bool


def _pairing(weights, potential):
    # <weights, potential> skipping zero-mass cells (whose potential is -inf).
    pos = weights > 0
    return float(np.sum(weights[pos] * potential[pos]))


def sinkhorn_balanced(alpha, beta, kernel: GibbsKernel, tol: float = 1e-9,
                      max_iter: int = 10_000) -> SinkhornResult:
    """Log-domain Sinkhorn value of balanced entropic OT between tensors."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mass = float(alpha.sum())
    if abs(mass - float(beta.sum())) > 1e-8:
        raise ValueError(f"marginal masses differ: {mass} vs {float(beta.sum())}")
    if np.any(alpha < 0) or np.any(beta < 0):
        raise ValueError("marginals must be non-negative")
    eps = kernel.epsilon
    log_alpha = _log_nonneg(alpha)
    log_beta = _log_nonneg(beta)
    phi = np.where(alpha > 0, 0.0, -np.inf)
    psi = np.where(beta > 0, 0.0, -np.inf)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        phi = log_alpha - kernel_apply_log(kernel, psi)
        log_m2 = psi + kernel_apply_log(kernel, phi, transpose=True)
        residual = float(np.abs(np.exp(log_m2) - beta).sum())
        if residual < tol:
            break
        psi = log_beta - kernel_apply_log(kernel, phi, transpose=True)
    m2 = np.exp(psi + kernel_apply_log(kernel, phi, transpose=True))
    value = eps * (_pairing(alpha, phi) + _pairing(m2, psi) - mass)
    return SinkhornResult(value, residual, iteration, residual < tol)


def sinkhorn_semiunbalanced(alpha, beta, kernel: GibbsKernel, lam: float,
                            tol: float = 1e-9, max_iter: int = 10_000) -> SinkhornResult:
    """Scaling iterations for semi-unbalanced OT (KL-relaxed second marginal).

    The second potential update carries the KL-proximal exponent
    ``lam / (lam + eps)``. Convergence is measured by the sup-norm change of
    that potential per iteration.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(alpha < 0) or np.any(beta < 0):
        raise ValueError("marginals must be non-negative")
    if not (alpha.sum() > 0 and beta.sum() > 0):
        raise ValueError("marginals must carry positive mass")
    eps = kernel.epsilon
    scale = lam / (lam + eps)
    log_alpha = _log_nonneg(alpha)
    log_beta = _log_nonneg(beta)
    phi = np.where(alpha > 0, 0.0, -np.inf)
    psi = np.where(beta > 0, 0.0, -np.inf)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        phi = log_alpha - kernel_apply_log(kernel, psi)
        psi_next = scale * (log_beta - kernel_apply_log(kernel, phi, transpose=True))
        step = np.abs(psi_next - psi)
        residual = float(step[np.isfinite(step)].max(initial=0.0))
        psi = psi_next
        if residual < tol:
            break
    log_m2 = psi + kernel_apply_log(kernel, phi, transpose=True)
    m2 = np.exp(log_m2)
    pos = m2 > 0
    rel_entropy = (
        _pairing(alpha, phi) + _pairing(m2, psi) - float(m2.sum())
    )
    kl = float(np.sum(m2[pos] * (log_m2[pos] - log_beta[pos]))
               - m2.sum() + beta.sum())
    value = eps * rel_entropy + lam * kl
    return SinkhornResult(value, residual, iteration, residual < tol)
