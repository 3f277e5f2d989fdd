import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from wassfact import ot

rng = np.random.default_rng(11)


def dense_log_kernel(costs, epsilon):
    """Explicit 2d-mode log-kernel as a (prod n) x (prod n) matrix."""
    shape = tuple(C.shape[0] for C in costs)
    size = int(np.prod(shape))
    L = np.zeros((size, size))
    for a, idx in enumerate(itertools.product(*map(range, shape))):
        for b, jdx in enumerate(itertools.product(*map(range, shape))):
            L[a, b] = -sum(C[i, j] for C, i, j in zip(costs, idx, jdx)) / epsilon
    return L


def random_cost(n):
    C = rng.uniform(0.1, 1.0, size=(n, n))
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    return C


# ---------------------------------------------------------------------------
# Costs and kernels


def test_grid_cost_two_points():
    assert np.allclose(ot.build_grid_cost(2, (0, 1), 2), [[0, 1], [1, 0]])


def test_grid_cost_unit_mean():
    C = ot.build_grid_cost(3, (0, 1), 2, normalize_unit_mean=True)
    assert C.mean() == pytest.approx(1.0)


def test_grid_cost_loop_oracle():
    C = ot.build_grid_cost(4, (-1, 1), 2)
    x = np.linspace(-1, 1, 4)
    for i, j in itertools.product(range(4), repeat=2):
        assert C[i, j] == pytest.approx((x[i] - x[j]) ** 2, abs=1e-15)


def test_grid_cost_validation():
    with pytest.raises(ValueError):
        ot.build_grid_cost(0)
    with pytest.raises(ValueError):
        ot.build_grid_cost(3, (1, 0))


def test_gibbs_kernel_entries():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    assert np.allclose(kernel.log_modes[0], 0.0)
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    kernel = ot.gibbs_kernel([C], 1.0)
    assert np.allclose(np.exp(kernel.log_modes[0]), [[1, np.exp(-1)], [np.exp(-1), 1]])
    kernel = ot.gibbs_kernel([C], 0.5)
    assert np.allclose(kernel.log_modes[0], -2 * C)


def test_gibbs_kernel_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        ot.gibbs_kernel([np.zeros((2, 2))], 0.0)


# ---------------------------------------------------------------------------
# Factored kernel application


def test_kernel_apply_log_total_mass():
    # all-ones kernel sums all mass: log result is log(1) = 0 everywhere
    kernel = ot.gibbs_kernel([np.zeros((3, 3))] * 2, 1.0)
    T = rng.random((3, 3))
    T /= T.sum()
    with np.errstate(divide="ignore"):
        out = ot.kernel_apply_log(kernel, np.log(T))
    assert np.allclose(out, 0.0, atol=1e-12)


def test_kernel_apply_log_dense_oracle_1d():
    C = random_cost(2)
    kernel = ot.gibbs_kernel([C], 0.7)
    logt = rng.normal(size=2)
    expected = np.log(np.exp(-C / 0.7) @ np.exp(logt))
    assert np.allclose(ot.kernel_apply_log(kernel, logt), expected, atol=1e-12)


@pytest.mark.parametrize("shape", [(2,), (3, 2), (3, 3, 3), (2, 3, 2)])
def test_kernel_apply_log_matches_dense_2d_mode_kernel(shape):
    costs = [random_cost(n) for n in shape]
    eps = 0.4
    kernel = ot.gibbs_kernel(costs, eps)
    T = rng.normal(size=shape)
    dense = dense_log_kernel(costs, eps)
    expected = logsumexp(dense + T.ravel()[None, :], axis=1).reshape(shape)
    assert np.allclose(ot.kernel_apply_log(kernel, T), expected, atol=1e-12)
    expected_t = logsumexp(dense.T + T.ravel()[None, :], axis=1).reshape(shape)
    assert np.allclose(
        ot.kernel_apply_log(kernel, T, transpose=True), expected_t, atol=1e-12
    )


def test_kernel_apply_log_shape_mismatch():
    kernel = ot.gibbs_kernel([np.zeros((3, 3))], 1.0)
    with pytest.raises(ValueError):
        ot.kernel_apply_log(kernel, np.zeros(4))


# ---------------------------------------------------------------------------
# Conjugates


def test_balanced_conjugate_hand_value():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    alpha = np.array([0.5, 0.5])
    value, grad = ot.ot_conjugate_balanced(alpha, np.zeros(2), kernel)
    assert value == pytest.approx(np.log(4) + 1, abs=1e-12)
    assert np.allclose(grad, [0.5, 0.5], atol=1e-12)


def test_balanced_conjugate_constant_shift_and_mass():
    kernel = ot.gibbs_kernel([random_cost(3)], 0.5)
    alpha = rng.random(3)
    U = rng.normal(size=3)
    c = 0.83
    v0, g0 = ot.ot_conjugate_balanced(alpha, U, kernel)
    v1, g1 = ot.ot_conjugate_balanced(alpha, U + c, kernel)
    assert v1 == pytest.approx(v0 + c * alpha.sum(), abs=1e-10)
    assert g0.sum() == pytest.approx(alpha.sum(), abs=1e-10)
    assert g1.sum() == pytest.approx(alpha.sum(), abs=1e-10)
    assert np.all(g0 > 0)


def test_balanced_conjugate_zero_mass_entries():
    kernel = ot.gibbs_kernel([random_cost(3)], 0.5)
    alpha = np.array([0.5, 0.0, 0.5])
    value, grad = ot.ot_conjugate_balanced(alpha, rng.normal(size=3), kernel)
    assert np.isfinite(value)
    assert np.all(grad > 0)


def test_balanced_conjugate_validation():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    with pytest.raises(ValueError):
        ot.ot_conjugate_balanced(np.zeros(2), np.zeros(2), kernel)
    with pytest.raises(ValueError):
        ot.ot_conjugate_balanced(np.ones(2), np.array([np.inf, 0.0]), kernel)


def test_semiunbalanced_at_zero_matches_balanced():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    alpha = np.array([0.5, 0.5])
    value, grad = ot.ot_conjugate_semiunbalanced(alpha, np.zeros(2), kernel, 2.0)
    assert value == pytest.approx(np.log(4) + 1, abs=1e-12)
    assert np.allclose(grad, [0.5, 0.5], atol=1e-12)


def test_semiunbalanced_balanced_limit():
    kernel = ot.gibbs_kernel([random_cost(3)], 1.0)
    alpha = rng.random(3)
    alpha /= alpha.sum()
    U = rng.uniform(-1, 1, size=3)
    vb, gb = ot.ot_conjugate_balanced(alpha, U, kernel)
    vs, gs = ot.ot_conjugate_semiunbalanced(alpha, U, kernel, 1e5)
    assert abs(vb - vs) < 1e-3
    assert np.abs(gb - gs).max() < 1e-3


def test_semiunbalanced_domain_violation():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    with pytest.raises(ot.DomainViolation):
        ot.ot_conjugate_semiunbalanced(np.ones(2), np.array([0.0, 1.5]), kernel, 1.0)


@pytest.mark.parametrize("lam", [np.inf, 1.7])
def test_conjugate_finite_difference_gradient(lam):
    kernel = ot.gibbs_kernel([random_cost(3)], 0.5)
    alpha = rng.random(3)
    U = rng.uniform(-0.5, 0.5, size=3)

    def f(u):
        if np.isinf(lam):
            return ot.ot_conjugate_balanced(alpha, u, kernel)
        return ot.ot_conjugate_semiunbalanced(alpha, u, kernel, lam)

    _, grad = f(U)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (f(U + e)[0] - f(U - e)[0]) / (2 * h)
        assert abs(fd - grad[i]) / max(abs(grad[i]), 1e-12) < 1e-5


@pytest.mark.parametrize("lam", [np.inf, 2.5])
def test_conjugate_midpoint_convexity(lam):
    kernel = ot.gibbs_kernel([random_cost(3)], 0.5)
    alpha = rng.random(3)
    for _ in range(10):
        U1 = rng.uniform(-1, 1, size=3)
        U2 = rng.uniform(-1, 1, size=3)

        def f(u):
            if np.isinf(lam):
                return ot.ot_conjugate_balanced(alpha, u, kernel)[0]
            return ot.ot_conjugate_semiunbalanced(alpha, u, kernel, lam)[0]

        assert f(0.5 * (U1 + U2)) <= 0.5 * (f(U1) + f(U2)) + 1e-10


# ---------------------------------------------------------------------------
# Loss assembly


def make_slice_spec(n, eps=0.5, lam=3.0):
    costs = [random_cost(n), random_cost(n)]
    return ot.LossSpec(ot.gibbs_kernel(costs, eps), lam, "slices", 0)


def test_loss_slice_single_equals_tensor_call():
    spec = make_slice_spec(3)
    X = rng.random((1, 3, 3))
    U = rng.normal(size=(1, 3, 3)) * 0.2
    v_slice, g_slice = ot.loss_conjugate(X, U, spec)
    v_tensor, g_tensor = ot.ot_conjugate_semiunbalanced(X[0], U[0], spec.kernel, spec.lam)
    assert v_slice == pytest.approx(v_tensor, abs=1e-12)
    assert np.allclose(g_slice[0], g_tensor, atol=1e-12)


def test_loss_slice_additivity():
    spec = make_slice_spec(3)
    x = rng.random((3, 3))
    u = rng.normal(size=(3, 3)) * 0.2
    X = np.stack([x, x])
    U = np.stack([u, u])
    v2, _ = ot.loss_conjugate(X, U, spec)
    v1, _ = ot.loss_conjugate(x[None], u[None], spec)
    assert v2 == pytest.approx(2 * v1, abs=1e-12)


def test_loss_slice_matches_manual_loop():
    spec = make_slice_spec(3)
    X = rng.random((4, 3, 3))
    U = rng.normal(size=(4, 3, 3)) * 0.2
    value, grad = ot.loss_conjugate(X, U, spec)
    total = 0.0
    for i in range(4):
        v, g = ot.ot_conjugate_semiunbalanced(X[i], U[i], spec.kernel, spec.lam)
        total += v
        assert np.allclose(grad[i], g, atol=1e-12)
    assert value == pytest.approx(total, abs=1e-12)


def test_loss_spec_validation():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    with pytest.raises(ValueError):
        ot.LossSpec(kernel, mode="nonsense")
    with pytest.raises(ValueError):
        ot.LossSpec(kernel, lam=-1.0)


# ---------------------------------------------------------------------------
# Sinkhorn evaluators


def test_sinkhorn_point_mass():
    C = random_cost(3)
    kernel = ot.gibbs_kernel([C], 0.5)
    alpha = np.array([1.0, 0.0, 0.0])
    res = ot.sinkhorn_balanced(alpha, alpha, kernel)
    # gamma is the point mass at (0, 0): <C, gamma> = 0, E(gamma) = -1
    assert res.converged
    assert res.value == pytest.approx(0.5 * (-1.0), abs=1e-8)


def test_sinkhorn_zero_cost_closed_form():
    kernel = ot.gibbs_kernel([np.zeros((4, 4))], 0.5)
    alpha = rng.random(4)
    alpha /= alpha.sum()
    beta = rng.random(4)
    beta /= beta.sum()
    res = ot.sinkhorn_balanced(alpha, beta, kernel)
    gamma = np.outer(alpha, beta)
    expected = 0.5 * float(np.sum(gamma * (np.log(gamma) - 1)))
    assert res.value == pytest.approx(expected, abs=1e-9)


def test_sinkhorn_n2_grid_oracle():
    C = random_cost(2)
    eps = 0.5
    kernel = ot.gibbs_kernel([C], eps)
    alpha = np.array([0.4, 0.6])
    beta = np.array([0.7, 0.3])
    res = ot.sinkhorn_balanced(alpha, beta, kernel)
    # one-parameter family of couplings: gamma00 = t
    lo, hi = max(0.0, alpha[0] + beta[0] - 1.0), min(alpha[0], beta[0])
    t = np.linspace(lo + 1e-9, hi - 1e-9, 200001)
    gamma = np.stack([t, alpha[0] - t, beta[0] - t, alpha[1] - beta[0] + t])
    cost = np.tensordot(C.ravel(), gamma, axes=1)
    entropy = np.sum(gamma * (np.log(gamma) - 1), axis=0)
    assert res.value == pytest.approx(float((cost + eps * entropy).min()), abs=1e-3)


def test_sinkhorn_mass_mismatch():
    kernel = ot.gibbs_kernel([np.zeros((2, 2))], 1.0)
    with pytest.raises(ValueError):
        ot.sinkhorn_balanced(np.array([1.0, 0.0]), np.array([1.0, 1.0]), kernel)


def test_sinkhorn_semiunbalanced_limit_matches_balanced():
    C = random_cost(3)
    kernel = ot.gibbs_kernel([C], 0.5)
    alpha = rng.random(3)
    alpha /= alpha.sum()
    beta = rng.random(3)
    beta /= beta.sum()
    balanced = ot.sinkhorn_balanced(alpha, beta, kernel)
    relaxed = ot.sinkhorn_semiunbalanced(alpha, beta, kernel, 1e6, max_iter=50_000)
    assert abs(balanced.value - relaxed.value) < 1e-3


def test_sinkhorn_semiunbalanced_penalty_bound():
    # with a tiny lambda the value is bounded by the free-marginal cost plus
    # the KL penalty scale
    C = random_cost(2)
    eps = 0.5
    kernel = ot.gibbs_kernel([C], eps)
    alpha = np.array([0.5, 0.5])
    beta = 2.0 * np.array([0.5, 0.5])
    res = ot.sinkhorn_semiunbalanced(alpha, beta, kernel, 0.01)
    # plugging the unconstrained-second-marginal optimum gives an upper bound
    free = ot.sinkhorn_semiunbalanced(alpha, beta, kernel, 1e-9)
    assert res.value <= free.value + 0.01 * (
        np.log(4) + 2
    )  # KL(gamma^T 1 | beta) at mass ratios <= 4


def test_sinkhorn_semiunbalanced_n2_grid_oracle():
    C = random_cost(2)
    eps, lam = 0.5, 1.0
    kernel = ot.gibbs_kernel([C], eps)
    alpha = np.array([0.45, 0.55])
    beta = np.array([0.6, 0.4])
    res = ot.sinkhorn_semiunbalanced(alpha, beta, kernel, lam, tol=1e-12)
    # grid over couplings with first marginal fixed to alpha
    K = np.exp(-C / eps)
    t = np.linspace(1e-6, 1 - 1e-6, 1200)
    s = t[:, None]
    best = np.inf
    g00 = alpha[0] * t[None, :]
    g01 = alpha[0] * (1 - t[None, :])
    g10 = alpha[1] * s
    g11 = alpha[1] * (1 - s)
    H = (
        g00 * (np.log(g00 / K[0, 0]) - 1)
        + g01 * (np.log(g01 / K[0, 1]) - 1)
        + g10 * (np.log(g10 / K[1, 0]) - 1)
        + g11 * (np.log(g11 / K[1, 1]) - 1)
    )
    m0 = g00 + g10
    m1 = g01 + g11
    kl = (
        m0 * np.log(m0 / beta[0])
        + m1 * np.log(m1 / beta[1])
        - (m0 + m1)
        + beta.sum()
    )
    best = float((eps * H + lam * kl).min())
    assert res.value == pytest.approx(best, abs=1e-3)


def test_sinkhorn_nonconvergence_reported():
    kernel = ot.gibbs_kernel([random_cost(3)], 0.05)
    alpha = rng.random(3)
    alpha /= alpha.sum()
    beta = rng.random(3)
    beta /= beta.sum()
    res = ot.sinkhorn_balanced(alpha, beta, kernel, tol=1e-14, max_iter=3)
    assert not res.converged
    assert res.residual > 0
