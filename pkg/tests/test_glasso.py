import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgl.errors import ConvergenceError, DegenerateGridError, NotPositiveDefiniteError
from fgl.glasso import (
    GlassoConfig,
    bic_score,
    dual_objective,
    glasso_fit,
    graph_stats,
    kkt_residual,
    lambda_grid,
    lasso_cd,
    penalty_matrix,
    select_lambda,
)
from fgl.simulate import random_graph_precision


def _sample_cov(rng, p, T, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    C = (Q * np.exp(rng.uniform(0, math.log(cond), p))) @ Q.T
    X = np.linalg.cholesky(C) @ rng.standard_normal((p, T))
    return np.cov(X, bias=True)


def _prox_grad_oracle(S, lam, iters=50000):
    """Proximal gradient with backtracking on -logdet(Theta) + tr(S Theta) + lam * sum_ij |Theta_ij|."""

    def smooth(th):
        try:
            L = np.linalg.cholesky(th)
        except np.linalg.LinAlgError:
            return np.inf
        return -2 * np.sum(np.log(np.diag(L))) + np.sum(S * th)

    theta = np.diag(1.0 / (np.diag(S) + lam))
    step = 1.0
    for _ in range(iters):
        f0 = smooth(theta)
        grad = S - np.linalg.inv(theta)
        step = min(2 * step, 10.0)
        while True:
            z = theta - step * grad
            new = np.sign(z) * np.maximum(np.abs(z) - step * lam, 0.0)
            new = (new + new.T) / 2
            d = new - theta
            bound = f0 + np.sum(grad * d) + np.sum(d * d) / (2 * step)
            if np.isfinite(bound) and smooth(new) <= bound:
                break
            step /= 2
        theta = new
        if np.max(np.abs(d)) < 1e-15:
            break
    return theta


def test_grid_example():
    grid = lambda_grid(np.array([[1.0, 0.5], [0.5, 1.0]]), GlassoConfig(grid_size=3, grid_floor_ratio=0.01))
    np.testing.assert_allclose(grid, [0.005, 0.05, 0.5], rtol=1e-14)


def test_grid_degenerate_and_increasing(rng):
    with pytest.raises(DegenerateGridError):
        lambda_grid(np.eye(3))
    S = _sample_cov(rng, 6, 30)
    grid = lambda_grid(S, GlassoConfig(grid_size=7))
    assert np.all(np.diff(grid) > 0)
    assert grid[-1] == np.max(np.abs(S - np.diag(np.diag(S))))


def test_large_lambda_gives_diagonal(rng):
    S = _sample_cov(rng, 5, 40)
    lam = np.max(np.abs(S - np.diag(np.diag(S))))
    est = glasso_fit(S, lam)
    np.testing.assert_allclose(est.theta, np.diag(1.0 / (np.diag(S) + lam)), atol=1e-14)


def test_zero_lambda_is_inverse(rng):
    S = _sample_cov(rng, 4, 200)
    est = glasso_fit(S, 0.0, GlassoConfig(convergence_tol=1e-10, cd_tol=1e-12))
    np.testing.assert_allclose(est.theta, np.linalg.inv(S), atol=1e-6)
    with pytest.raises(ValueError):
        glasso_fit(np.ones((3, 3)), 0.0)
    with pytest.raises(ValueError):
        glasso_fit(S, -1.0)


def test_two_by_two_against_convex_oracle():
    S = np.array([[1.0, 0.6], [0.6, 1.0]])
    est = glasso_fit(S, 0.2, GlassoConfig(convergence_tol=1e-12, cd_tol=1e-13))
    np.testing.assert_allclose(est.theta, _prox_grad_oracle(S, 0.2), atol=1e-8)
    # closed form: W = [[1.2, 0.4], [0.4, 1.2]] and theta = inv(W)
    np.testing.assert_allclose(est.theta, np.linalg.inv([[1.2, 0.4], [0.4, 1.2]]), atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_small_problems_against_convex_oracle(seed):
    rng = np.random.default_rng(seed)
    S = _sample_cov(rng, 4, 12)
    lam = 0.3 * np.max(np.abs(S - np.diag(np.diag(S))))
    est = glasso_fit(S, lam, GlassoConfig(convergence_tol=1e-12, cd_tol=1e-13))
    np.testing.assert_allclose(est.theta, _prox_grad_oracle(S, lam), atol=1e-6)


def test_lasso_trivial_cases(rng):
    W = _sample_cov(rng, 4, 40) + np.eye(4)
    np.testing.assert_array_equal(lasso_cd(W, np.zeros(4), 0.1), np.zeros(4))
    s = rng.standard_normal(4)
    np.testing.assert_allclose(lasso_cd(np.eye(4), s, 0.0), s, atol=1e-12)


def _active_set_oracle(W, s, lam):
    """Enumerate sign patterns; keep the one whose solution is self-consistent."""
    n = s.size
    best, best_val = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=n):
        sg = np.array(signs, dtype=float)
        act = sg != 0
        beta = np.zeros(n)
        if act.any():
            beta[act] = np.linalg.solve(W[np.ix_(act, act)], s[act] - lam * sg[act])
            if np.any(np.sign(beta[act]) != sg[act]):
                continue
        val = 0.5 * beta @ W @ beta - s @ beta + lam * np.abs(beta).sum()
        if val < best_val:
            best, best_val = beta, val
    return best


@pytest.mark.parametrize("seed", range(5))
def test_lasso_against_active_set_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    W = _sample_cov(rng, 4, 20) + 0.1 * np.eye(4)
    s = rng.standard_normal(4)
    beta = lasso_cd(W, s, 0.1, cd_tol=1e-13)
    np.testing.assert_allclose(beta, _active_set_oracle(W, s, 0.1), atol=1e-6)
    g = W @ beta - s
    nz = beta != 0
    assert np.all(np.abs(g[nz] + 0.1 * np.sign(beta[nz])) <= 1e-8)
    assert np.all(np.abs(g[~nz]) <= 0.1 + 1e-8)


def test_bic_closed_forms():
    p = 3
    assert bic_score(np.eye(p), np.eye(p), 100) == pytest.approx(100 * p + math.log(100) * p)
    T = 7
    assert bic_score(2 * np.eye(2), np.eye(2), T) == pytest.approx(T * (4 - 2 * math.log(2)) + math.log(T) * 2)
    with pytest.raises(NotPositiveDefiniteError):
        bic_score(-np.eye(2), np.eye(2), 5)


def test_bic_against_eigen_logdet(rng):
    S = _sample_cov(rng, 5, 25)
    est = select_lambda(S, 25)
    ev = np.linalg.eigvalsh(est.theta)
    nnz = np.count_nonzero(np.abs(np.triu(est.theta)) > 1e-10)
    ref = 25 * (np.trace(est.theta @ S) - np.sum(np.log(ev))) + math.log(25) * nnz
    assert est.bic == pytest.approx(ref, rel=1e-8)


@settings(max_examples=25)
@given(p=st.integers(2, 25), ratio=st.floats(0.3, 3.0), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**31),
       weighting=st.sampled_from(["uniform", "diagonal_weighted"]))
def test_kkt_certificate_and_pd(p, ratio, frac, seed, weighting):
    rng = np.random.default_rng(seed)
    T = max(3, int(ratio * p))
    S = _sample_cov(rng, p, T)
    lam = frac * np.max(np.abs(S - np.diag(np.diag(S))))
    cfg = GlassoConfig(penalty_weighting=weighting)
    est = glasso_fit(S, lam, cfg)
    assert np.array_equal(est.theta, est.theta.T)
    assert np.linalg.eigvalsh(est.theta)[0] > 0
    assert kkt_residual(est.theta, S, penalty_matrix(S, lam, weighting)) <= 1e-4


def test_dual_objective_monotone(rng):
    S = _sample_cov(rng, 30, 20)
    lam = 0.1 * np.max(np.abs(S - np.diag(np.diag(S))))
    est = glasso_fit(S, lam, record_objective=True)
    obj = np.array(est.objective_trace)
    assert obj.size >= 2
    slack = 1e-10 * np.maximum(1.0, np.abs(obj[:-1]))
    assert np.all(np.diff(obj) <= slack)
    assert obj[-1] == pytest.approx(dual_objective(est.working_cov))


def test_edge_count_monotone_along_path(rng):
    S = _sample_cov(rng, 25, 40)
    prev = None
    for lam in lambda_grid(S, GlassoConfig(grid_size=12)):
        edges = graph_stats(glasso_fit(S, lam).theta).edge_count // 2
        if prev is not None:
            assert edges <= prev + 1
        prev = edges


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_scale_homogeneity(rng, c):
    S = _sample_cov(rng, 8, 30)
    lam = 0.2 * np.max(np.abs(S - np.diag(np.diag(S))))
    base = glasso_fit(S, lam).theta
    scaled = glasso_fit(c * S, c * lam).theta
    np.testing.assert_allclose(scaled * c, base, atol=1e-8 * np.max(np.abs(base)))


def test_warm_start_matches_cold(rng):
    S = _sample_cov(rng, 12, 20)
    grid = lambda_grid(S)
    cfg = GlassoConfig(convergence_tol=1e-10, cd_tol=1e-12)
    warm = glasso_fit(S, grid[5], cfg)
    a = glasso_fit(S, grid[2], cfg, warm_start=warm).theta
    b = glasso_fit(S, grid[2], cfg).theta
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_convergence_error_carries_state(rng):
    S = _sample_cov(rng, 20, 10)
    lam = 0.05 * np.max(np.abs(S - np.diag(np.diag(S))))
    with pytest.raises(ConvergenceError) as info:
        glasso_fit(S, lam, GlassoConfig(max_sweeps=1))
    assert info.value.last_W.shape == (20, 20)
    assert info.value.residual > 0


def test_select_lambda_is_bic_argmin(rng):
    S = _sample_cov(rng, 10, 30)
    est = select_lambda(S, 30)
    lams, bics = zip(*est.path)
    assert np.all(np.diff(lams) > 0)
    assert est.bic == min(bics)
    assert est.lam == max(l for l, b in est.path if b == est.bic)
    with pytest.raises(DegenerateGridError):
        select_lambda(np.diag([1.0, 2.0, 3.0]), 30)


def test_graph_stats_examples():
    g = graph_stats(np.eye(4))
    assert g.edge_count == 0 and g.max_degree == 0
    A = np.eye(3)
    A[0, 1] = A[1, 0] = 0.5
    g = graph_stats(A)
    assert g.degrees.tolist() == [1, 1, 0] and g.max_degree == 1 and g.edge_count == 2
    g = graph_stats(np.ones((4, 4)))
    assert g.max_degree == 3 and g.edge_count == 12


def _f1(est_support, true_support):
    tp = len(est_support & true_support)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(est_support), tp / len(true_support)
    return 2 * prec * rec / (prec + rec)


@pytest.mark.slow
def test_support_recovery_beats_thresholded_inverse():
    # denser graph than the factor design so that F1 is informative
    rng = np.random.default_rng(11)
    wins = []
    for _ in range(20):
        p, T = 40, 256
        theta = random_graph_precision(p, 0.05, 0.1, 0.3, rng)
        X = np.linalg.solve(np.linalg.cholesky(theta).T, rng.standard_normal((p, T)))
        S = np.cov(X, bias=True)
        est = select_lambda(S, T)
        truth = {(i, j) for i, j in graph_stats(theta).support if i < j}
        mine = {(i, j) for i, j in graph_stats(est.theta).support if i < j}
        inv = np.abs(np.linalg.inv(S))
        iu = np.triu_indices(p, 1)
        order = np.argsort(-inv[iu])[: max(len(mine), 1)]
        thresh = {(int(iu[0][k]), int(iu[1][k])) for k in order}
        wins.append(_f1(mine, truth) - _f1(thresh, truth))
    assert np.mean(wins) > 0
