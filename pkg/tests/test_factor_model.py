import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgl.errors import CollinearFactorsError, InsufficientRankError
from fgl.factor_model import (
    ReturnsPanel,
    default_k_max,
    estimate_pca,
    factor_objective,
    fit_observed_factors,
    ic_penalty,
    select_num_factors,
)
from fgl.simulate import DgpSpec, simulate


def _panel(rng, p=8, T=64):
    return ReturnsPanel(rng.standard_normal((p, T)))


def test_panel_validation():
    with pytest.raises(ValueError):
        ReturnsPanel(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        ReturnsPanel(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        ReturnsPanel(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        ReturnsPanel(np.zeros((2, 3)), period_labels=("a", "b"))


def test_panel_window_and_moments(rng):
    X = rng.standard_normal((4, 10))
    panel = ReturnsPanel(X)
    np.testing.assert_allclose(panel.sample_covariance(), np.cov(X, bias=True), atol=1e-14)
    sub = panel.window(2, 6, [0, 3])
    np.testing.assert_array_equal(sub.values, X[[0, 3], 2:6])
    assert sub.asset_labels == ("a0", "a3")


def test_exact_factor_structure_has_zero_residual(rng):
    b = rng.standard_normal((5, 1))
    f = rng.standard_normal((1, 50))
    fit = estimate_pca(ReturnsPanel(b @ f), 1)
    assert np.max(np.abs(fit.residuals)) < 1e-10
    assert np.max(np.abs(fit.sigma_eps)) < 1e-20


def test_pca_matches_svd_truncation(rng):
    panel = _panel(rng)
    fit = estimate_pca(panel, 2)
    R = panel.centered()
    U, s, Vt = np.linalg.svd(R)
    best = (U[:, :2] * s[:2]) @ Vt[:2]
    np.testing.assert_allclose(fit.common, best, atol=1e-10)


@settings(max_examples=30)
@given(p=st.integers(2, 30), T=st.integers(3, 40), k=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_identification_and_orthogonality(p, T, k, seed):
    k = min(k, p, T - 1)
    panel = ReturnsPanel(np.random.default_rng(seed).standard_normal((p, T)))
    fit = estimate_pca(panel, k)
    F, B, E = fit.factors, fit.loadings, fit.residuals
    assert np.max(np.abs(F @ F.T / T - np.eye(k))) <= 1e-8
    BtB = B.T @ B
    off = BtB - np.diag(np.diag(BtB))
    assert np.max(np.abs(off)) <= 1e-8 * max(np.max(np.abs(BtB)), 1.0)
    np.testing.assert_allclose(panel.centered(), B @ F + E, atol=1e-12)
    assert np.max(np.abs(E @ F.T / T)) <= 1e-8
    # sign convention: the largest |loading| of each factor is positive
    idx = np.argmax(np.abs(B), axis=0)
    assert np.all(B[idx, np.arange(k)] > 0)


def test_tall_and_wide_paths_agree(rng):
    X = rng.standard_normal((12, 9))
    wide = estimate_pca(ReturnsPanel(X), 3)  # T < p: T x T Gram
    U, s, Vt = np.linalg.svd(X - X.mean(1, keepdims=True))
    np.testing.assert_allclose(wide.common, (U[:, :3] * s[:3]) @ Vt[:3], atol=1e-10)
    Y = rng.standard_normal((6, 40))  # T > p: p x p Gram
    fit = estimate_pca(ReturnsPanel(Y), 2)
    U, s, Vt = np.linalg.svd(Y - Y.mean(1, keepdims=True))
    np.testing.assert_allclose(fit.common, (U[:, :2] * s[:2]) @ Vt[:2], atol=1e-10)


def test_nesting_up_to_sign(rng):
    panel = _panel(rng, 10, 50)
    f2 = estimate_pca(panel, 2).factors
    f4 = estimate_pca(panel, 4).factors
    for i in range(2):
        assert min(np.max(np.abs(f4[i] - f2[i])), np.max(np.abs(f4[i] + f2[i]))) < 1e-8


def test_pca_errors(rng):
    panel = _panel(rng, 4, 10)
    with pytest.raises(ValueError):
        estimate_pca(panel, 0)
    with pytest.raises(ValueError):
        estimate_pca(panel, 5)
    rank1 = ReturnsPanel(np.outer(rng.standard_normal(4), rng.standard_normal(10)))
    with pytest.raises(InsufficientRankError):
        estimate_pca(rank1, 2)


def test_objective_monotone_and_matches_pca_residual(rng):
    panel = _panel(rng, 15, 40)
    R = panel.centered()
    vals = [factor_objective(R, K) for K in range(1, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    for K in (1, 3, 5):
        resid = estimate_pca(panel, K).residuals
        assert factor_objective(R, K) == pytest.approx(np.sum(resid**2) / R.size, rel=1e-10)


def test_select_num_factors_edge_cases(rng):
    assert select_num_factors(ReturnsPanel(rng.standard_normal((2, 30))), k_max=1) == 1
    with pytest.raises(ValueError):
        select_num_factors(_panel(rng), k_max=0)
    k, crit = select_num_factors(_panel(rng), k_max=3, return_criterion=True)
    assert crit.shape == (3,) and k == int(np.argmin(crit)) + 1


def test_penalty_and_kmax():
    assert ic_penalty(100, 100) == pytest.approx(0.02 * np.log(50))
    assert default_k_max(8, 100) == 1
    assert default_k_max(10**6, 100) == 15


def test_noise_panel_selects_one_factor():
    rng = np.random.default_rng(7)
    picks = [select_num_factors(ReturnsPanel(rng.standard_normal((111, 256))), k_max=5) for _ in range(11)]
    assert sum(k == 1 for k in picks) > len(picks) // 2


@pytest.mark.slow
def test_strong_factors_recovered():
    spec = DgpSpec(T=256, K=3, loadings="gaussian")
    hits = sum(select_num_factors(simulate(spec, seed=s)[0]) == 3 for s in range(100))
    assert hits >= 90


def test_observed_factors_reproduce_pca(rng):
    panel = _panel(rng, 6, 80)
    pca = estimate_pca(panel, 2)
    obs = fit_observed_factors(panel, pca.factors)
    np.testing.assert_allclose(obs.loadings, pca.loadings, atol=1e-8)


def test_observed_factor_equal_to_asset(rng):
    panel = _panel(rng, 4, 30)
    fit = fit_observed_factors(panel, panel.values[1:2])
    assert np.max(np.abs(fit.residuals[1])) < 1e-12


def test_observed_factors_against_normal_equations(rng):
    T = 120
    F = rng.standard_normal((2, T))
    R = rng.standard_normal((6, 2)) @ F + rng.standard_normal((6, T))
    fit = fit_observed_factors(ReturnsPanel(R), F)
    Fc = F - F.mean(1, keepdims=True)
    Rc = R - R.mean(1, keepdims=True)
    resid = np.empty_like(Rc)
    for i in range(6):
        beta = np.linalg.inv(Fc @ Fc.T) @ (Fc @ Rc[i])
        resid[i] = Rc[i] - beta @ Fc
    np.testing.assert_allclose(fit.sigma_eps, resid @ resid.T / T, atol=1e-10)


def test_observed_factor_errors(rng):
    panel = _panel(rng, 4, 20)
    f = rng.standard_normal(20)
    with pytest.raises(CollinearFactorsError):
        fit_observed_factors(panel, np.vstack([f, 2 * f]))
    with pytest.raises(ValueError):
        fit_observed_factors(panel, rng.standard_normal((1, 19)))
