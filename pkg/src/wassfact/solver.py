"""Block coordinate descent for Wasserstein tensor factorisation.

Each block (factor matrix or core tensor) is updated by solving a smooth
convex dual problem with closed-form gradients, then mapping the optimal
dual variable back to a strictly positive, exactly normalised primal block.
The dual problems are assembled from two linear operators and their adjoints:
one coupling a dual tensor to a single factor matrix, one coupling it to the
core.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from wassfact import entropy as ent
from wassfact import ot
from wassfact.entropy import Constraint
from wassfact.tensor import (
    matricize,
    mode_product,
    multi_mode_product,
    superdiagonal,
    tensorize,
    tucker_reconstruct,
)

# ---------------------------------------------------------------------------
# Model and configuration


@dataclass
class TuckerModel:
    """Core tensor plus factor matrices with per-block constraints.

    ``constraints`` holds the core constraint first, then one per factor.
    ``core_fixed`` marks CP mode: the core is a superdiagonal of ones and is
    never updated.
    """

    core: np.ndarray
    factors: list
    constraints: list
    core_fixed: bool = False

    @property
    def order(self) -> int:
        return len(self.factors)

    def reconstruct(self) -> np.ndarray:
        return tucker_reconstruct(self.core, self.factors)

    def copy(self) -> "TuckerModel":
        return TuckerModel(
            self.core.copy(),
            [A.copy() for A in self.factors],
            list(self.constraints),
            self.core_fixed,
        )


@dataclass
class InnerConfig:
    """Inner smooth-minimisation settings."""

    method: str = "lbfgs"  # "lbfgs" or "gd"
    grad_tol: float = 1e-7
    max_iters: int = 500
    memory: int = 10
    armijo: float = 1e-4
    max_halvings: int = 60


@dataclass
class SolverConfig:
    """Everything needed to run one decomposition."""

    loss: ot.LossSpec
    ranks: tuple
    rho: tuple  # rho[0] for the core, rho[1..d] for the factors
    constraints: tuple  # core constraint first, then one per factor
    cp: bool = False
    outer_iters: int = 100
    outer_tol: float = 1e-5
    inner: InnerConfig = field(default_factory=InnerConfig)
    init: str = "nnsvd"  # "nnsvd" or "random"
    seed: int = 0
    monitor_tol: float = 1e-7
    monitor_max_iter: int = 5000

    def __post_init__(self):
        if any(r <= 0 for r in self.rho):
            raise ValueError("barrier weights rho must be positive")
        if len(self.rho) != len(self.ranks) + 1:
            raise ValueError("need one rho for the core plus one per factor")
        if len(self.constraints) != len(self.ranks) + 1:
            raise ValueError("need one constraint for the core plus one per factor")


@dataclass
class TraceRecord:
    sweep: int
    block: str
    inner_iterations: int
    dual_value: float
    grad_norm: float
    primal_objective: float
    seconds: float


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    converged: bool = True

    def add(self, record: TraceRecord):
        self.records.append(record)


# ---------------------------------------------------------------------------
# Linear operators of the dual problems


def xi_operator(U: np.ndarray, k: int, core: np.ndarray, factors) -> np.ndarray:
    """Linear map sending a dual tensor to the k-th factor-matrix block.

    ``[U prod_{j>k} x_j Aj^T]_(k) @ [core prod_{j<k} x_j Aj]_(k)^T``.
    """
    left = multi_mode_product(U, [(factors[j].T, j) for j in range(k + 1, len(factors))])
    right = multi_mode_product(core, [(factors[j], j) for j in range(k)])
    return matricize(left, k) @ matricize(right, k).T


def xi_adjoint(G: np.ndarray, k: int, core: np.ndarray, factors,
               data_shape) -> np.ndarray:
    """Adjoint of :func:`xi_operator`: maps an n_k x r_k matrix to dual space."""
    right = multi_mode_product(core, [(factors[j], j) for j in range(k)])
    mid_shape = tuple(
        data_shape[j] if j <= k else core.shape[j] for j in range(len(data_shape))
    )
    folded = tensorize(np.asarray(G) @ matricize(right, k), k, mid_shape)
    return multi_mode_product(
        folded, [(factors[j], j) for j in range(k + 1, len(factors))]
    )


def omega_operator(U: np.ndarray, factors) -> np.ndarray:
    """Map a dual tensor to core space: ``U x_1 A1^T ... x_d Ad^T``."""
    return multi_mode_product(U, [(A.T, j) for j, A in enumerate(factors)])


def omega_adjoint(G: np.ndarray, factors) -> np.ndarray:
    """Adjoint of :func:`omega_operator`; equals the Tucker reconstruction of G."""
    return tucker_reconstruct(G, factors)


# ---------------------------------------------------------------------------
# Dual objectives


def factor_dual_objective(U: np.ndarray, k: int, X: np.ndarray,
                          model: TuckerModel, cfg: SolverConfig):
    """Value and gradient of the dual problem for factor ``k``."""
    rho = cfg.rho[k + 1]
    constraint = model.constraints[k + 1]
    loss_val, loss_grad = ot.loss_conjugate(X, U, cfg.loss)
    scaled = -xi_operator(U, k, model.core, model.factors) / rho
    ent_val, ent_grad = ent.entropy_conjugate(scaled, constraint)
    value = loss_val + rho * ent_val
    grad = loss_grad - xi_adjoint(ent_grad, k, model.core, model.factors, X.shape)
    return value, grad


def core_dual_objective(U: np.ndarray, X: np.ndarray, model: TuckerModel,
                        cfg: SolverConfig):
    """Value and gradient of the dual problem for the core tensor."""
    rho = cfg.rho[0]
    constraint = model.constraints[0]
    loss_val, loss_grad = ot.loss_conjugate(X, U, cfg.loss)
    scaled = -omega_operator(U, model.factors) / rho
    ent_val, ent_grad = ent.entropy_conjugate(scaled, constraint)
    value = loss_val + rho * ent_val
    grad = loss_grad - omega_adjoint(ent_grad, model.factors)
    return value, grad


# ---------------------------------------------------------------------------
# Smooth unconstrained inner minimisation


@dataclass
class InnerResult:
    U: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def _try_eval(objective, U):
    """Evaluate, mapping domain violations and overflow to +inf."""
    try:
        value, grad = objective(U)
    except ot.DomainViolation:
        return np.inf, None
    if not np.isfinite(value):
        return np.inf, None
    return value, grad


def inner_minimize(objective, U0: np.ndarray, cfg: InnerConfig) -> InnerResult:
    """Minimise a smooth convex objective with backtracking line search.

    ``objective(U)`` returns ``(value, grad)`` and may raise
    :class:`~wassfact.ot.DomainViolation`; trial points that violate the
    domain or overflow are rejected by halving the step, so accepted
    iterates always stay strictly inside the domain.
    """
    U = np.array(U0, dtype=np.float64)
    value, grad = _try_eval(objective, U)
    if grad is None:
        raise ValueError("infeasible starting point for inner minimisation")
    s_hist, y_hist = [], []
    iterations = 0
    converged = False
    stalled = 0
    for iterations in range(1, cfg.max_iters + 1):
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= cfg.grad_tol:
            converged = True
            break
        direction = -grad
        if cfg.method == "lbfgs" and s_hist:
            direction = -_lbfgs_direction(grad, s_hist, y_hist)
        slope = float(np.sum(grad * direction))
        if slope >= 0:  # not a descent direction; restart from steepest descent
            s_hist, y_hist = [], []
            direction = -grad
            slope = -float(np.sum(grad * grad))
        if cfg.method == "lbfgs" and s_hist:
            step = 1.0
        else:
            step = min(1.0, 1.0 / max(grad_norm, 1e-12))
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            trial = U + step * direction
            trial_value, trial_grad = _try_eval(objective, trial)
            if trial_grad is not None and trial_value <= value + cfg.armijo * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        # terminate once decreases fall below the numeric floor of the
        # objective; the gradient can plateau slightly above grad_tol there
        if value - trial_value <= 1e-14 * (1.0 + abs(value)):
            stalled += 1
        else:
            stalled = 0
        if cfg.method == "lbfgs":
            s = trial - U
            y = trial_grad - grad
            sy = float(np.sum(s * y))
            if sy > 1e-12 * float(np.sqrt(np.sum(s * s) * np.sum(y * y))):
                s_hist.append(s)
                y_hist.append(y)
                if len(s_hist) > cfg.memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
        U, value, grad = trial, trial_value, trial_grad
        if stalled >= 3:
            break
    else:
        iterations = cfg.max_iters
    grad_norm = float(np.abs(grad).max())
    if grad_norm <= cfg.grad_tol:
        converged = True
    return InnerResult(U, value, grad_norm, iterations, converged)


def _lbfgs_direction(grad, s_hist, y_hist):
    """Two-loop recursion returning ``H grad`` for the implicit inverse Hessian."""
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(np.sum(s * y)) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(np.sum(s * q))
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= float(np.sum(s * y) / np.sum(y * y))
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(np.sum(y * q))
        q += (a - b) * s
    return q


# ---------------------------------------------------------------------------
# Block solves


def solve_factor_subproblem(k: int, X: np.ndarray, model: TuckerModel,
                            cfg: SolverConfig, U0=None):
    """Solve the dual for factor ``k`` and recover the primal block.

    Returns ``(new_factor, inner_result)``; the factor satisfies its
    constraint exactly and is strictly positive.
    """
    if U0 is None:
        U0 = np.zeros(X.shape)
    result = inner_minimize(
        lambda U: factor_dual_objective(U, k, X, model, cfg), U0, cfg.inner
    )
    scaled = -xi_operator(result.U, k, model.core, model.factors) / cfg.rho[k + 1]
    return ent.primal_recover(scaled, model.constraints[k + 1]), result


def solve_core_subproblem(X: np.ndarray, model: TuckerModel, cfg: SolverConfig,
                          U0=None):
    """Solve the dual for the core tensor and recover it."""
    if U0 is None:
        U0 = np.zeros(X.shape)
    result = inner_minimize(
        lambda U: core_dual_objective(U, X, model, cfg), U0, cfg.inner
    )
    scaled = -omega_operator(result.U, model.factors) / cfg.rho[0]
    return ent.primal_recover(scaled, model.constraints[0]), result


def monitored_loss(X: np.ndarray, reconstruction: np.ndarray, cfg: SolverConfig) -> float:
    """Primal OT loss between data and reconstruction via Sinkhorn evaluators."""
    spec = cfg.loss
    if spec.mode == "tensor":
        pairs = [(X, reconstruction)]
    else:
        pairs = list(
            zip(np.moveaxis(X, spec.axis, 0), np.moveaxis(reconstruction, spec.axis, 0))
        )
    total = 0.0
    for a, b in pairs:
        if spec.balanced:
            res = ot.sinkhorn_balanced(
                a, b, spec.kernel, tol=cfg.monitor_tol, max_iter=cfg.monitor_max_iter
            )
        else:
            res = ot.sinkhorn_semiunbalanced(
                a, b, spec.kernel, spec.lam,
                tol=cfg.monitor_tol, max_iter=cfg.monitor_max_iter,
            )
        total += res.value
    return total


def smoothed_objective(X: np.ndarray, model: TuckerModel, cfg: SolverConfig) -> float:
    """Monitored loss plus all entropy barrier terms."""
    value = monitored_loss(X, model.reconstruct(), cfg)
    value += cfg.rho[0] * ent.entropy(model.core)
    for k, A in enumerate(model.factors):
        value += cfg.rho[k + 1] * ent.entropy(A)
    return value


def primal_block_objective(X: np.ndarray, model: TuckerModel, cfg: SolverConfig,
                           block: int) -> float:
    """Loss plus the barrier of one block (core = 0, factor k = k + 1)."""
    value = monitored_loss(X, model.reconstruct(), cfg)
    if block == 0:
        return value + cfg.rho[0] * ent.entropy(model.core)
    return value + cfg.rho[block] * ent.entropy(model.factors[block - 1])


# ---------------------------------------------------------------------------
# Initialisation


def _nndsvd_columns(M: np.ndarray, rank: int) -> np.ndarray:
    """Leading non-negative directions of ``M`` via the positive/negative
    singular-vector split; zero entries get a small positive floor."""
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    n = M.shape[0]
    W = np.zeros((n, rank))
    W[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    for j in range(1, rank):
        x, y = u[:, j], vt[j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        norm_p = np.linalg.norm(xp) * np.linalg.norm(yp)
        norm_n = np.linalg.norm(xn) * np.linalg.norm(yn)
        if norm_p >= norm_n:
            side, norm = xp, np.linalg.norm(xp)
        else:
            side, norm = xn, np.linalg.norm(xn)
        if norm > 0:
            W[:, j] = np.sqrt(s[j] * max(norm_p, norm_n)) * side / norm
    floor = max(float(M.mean()) / 100.0, np.finfo(float).tiny)
    W[W <= 0] = floor
    return W


def _project_block(block: np.ndarray, constraint: Constraint) -> np.ndarray:
    if constraint is Constraint.NONE:
        return block
    if constraint is Constraint.SIMPLEX:
        return block / block.sum()
    axis = 1 if constraint is Constraint.ROWS else 0
    return block / block.sum(axis=axis, keepdims=True)


def nnsvd_init(X: np.ndarray, ranks, constraints, cp: bool = False) -> TuckerModel:
    """Deterministic non-negative SVD initialisation of all blocks."""
    X = np.asarray(X, dtype=np.float64)
    constraints = list(constraints)
    factors = []
    for k, r in enumerate(ranks):
        if r > X.shape[k]:
            raise ValueError(f"rank {r} exceeds mode size {X.shape[k]}")
        W = _nndsvd_columns(matricize(X, k), r)
        factors.append(_project_block(W, constraints[k + 1]))
    if cp:
        core = superdiagonal(X.ndim, ranks[0])
    else:
        core = _project_block(np.ones(tuple(ranks)), constraints[0])
    return TuckerModel(core, factors, constraints, core_fixed=cp)


def random_init(X: np.ndarray, ranks, constraints, seed: int,
                cp: bool = False) -> TuckerModel:
    """Uniform positive random initialisation of all blocks."""
    rng = np.random.default_rng(seed)
    constraints = list(constraints)
    factors = []
    for k, r in enumerate(ranks):
        if r > X.shape[k]:
            raise ValueError(f"rank {r} exceeds mode size {X.shape[k]}")
        A = rng.uniform(0.5, 1.5, size=(X.shape[k], r))
        factors.append(_project_block(A, constraints[k + 1]))
    if cp:
        core = superdiagonal(X.ndim, ranks[0])
    else:
        core = _project_block(rng.uniform(0.5, 1.5, size=tuple(ranks)), constraints[0])
    return TuckerModel(core, factors, constraints, core_fixed=cp)


def initial_model(X: np.ndarray, cfg: SolverConfig) -> TuckerModel:
    if cfg.cp and len(set(cfg.ranks)) != 1:
        raise ValueError("CP mode requires equal ranks on every mode")
    if cfg.init == "nnsvd":
        return nnsvd_init(X, cfg.ranks, cfg.constraints, cp=cfg.cp)
    if cfg.init == "random":
        return random_init(X, cfg.ranks, cfg.constraints, cfg.seed, cp=cfg.cp)
    raise ValueError(f"unknown init mode {cfg.init!r}")


# ---------------------------------------------------------------------------
# Outer loop


def block_coordinate_descent(X: np.ndarray, cfg: SolverConfig,
                             model: TuckerModel | None = None):
    """Sweep the factor blocks then the core until the monitored smoothed
    objective stalls. Returns ``(model, trace)``.

    Dual variables are warm-started per block across sweeps (zero on the
    first visit).
    """
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0) or not X.sum() > 0:
        raise ValueError("data tensor must be non-negative with positive mass")
    if model is None:
        model = initial_model(X, cfg)
    else:
        model = model.copy()
    trace = SolveTrace()
    warm = {}
    start = time.perf_counter()
    previous = smoothed_objective(X, model, cfg)
    for sweep in range(1, cfg.outer_iters + 1):
        for k in range(model.order):
            A, result = solve_factor_subproblem(k, X, model, cfg, warm.get(k))
            warm[k] = result.U
            model.factors[k] = A
            trace.converged &= result.converged
            trace.add(TraceRecord(
                sweep, f"factor{k + 1}", result.iterations, result.value,
                result.grad_norm, np.nan, time.perf_counter() - start,
            ))
        if not model.core_fixed:
            core, result = solve_core_subproblem(X, model, cfg, warm.get("core"))
            warm["core"] = result.U
            model.core = core
            trace.converged &= result.converged
            trace.add(TraceRecord(
                sweep, "core", result.iterations, result.value,
                result.grad_norm, np.nan, time.perf_counter() - start,
            ))
        objective = smoothed_objective(X, model, cfg)
        trace.records[-1].primal_objective = objective
        change = abs(previous - objective) / max(abs(previous), 1e-12)
        previous = objective
        if change < cfg.outer_tol:
            break
    return model, trace


def project_onto_basis(X_new: np.ndarray, model: TuckerModel, cfg: SolverConfig,
                       block: int, U0=None):
    """Solve the single convex subproblem for one block, all others fixed.

    ``block`` 0 is the core, ``block`` k >= 1 is factor k. The subproblem is
    convex, so the result is independent of ``U0`` up to solver tolerance.
    Returns ``(block_value, inner_result)``.
    """
    X_new = np.asarray(X_new, dtype=np.float64)
    if block == 0:
        return solve_core_subproblem(X_new, model, cfg, U0)
    return solve_factor_subproblem(block - 1, X_new, model, cfg, U0)
