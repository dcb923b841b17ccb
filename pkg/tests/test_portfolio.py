import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgl.errors import DegenerateFrontierError, ZeroMeanError
from fgl.portfolio import (
    MomentInputs,
    exposure_scalars,
    gmv_weights,
    mrc_weights,
    mwc_weights,
    portfolio_variance,
    risk_exposure,
    squared_sharpe,
    weights,
)


def _spd(rng, n, cond=30.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.exp(rng.uniform(0, np.log(cond), n))) @ Q.T


def _kkt(sigma, A, b):
    p, k = sigma.shape[0], A.shape[0]
    M = np.block([[2 * sigma, A.T], [A, np.zeros((k, k))]])
    return np.linalg.solve(M, np.concatenate([np.zeros(p), b]))[:p]


def _projected_gradient_gmv(sigma, iters=20000):
    """Gradient descent on the hyperplane sum(w) = 1."""
    p = sigma.shape[0]
    w = np.full(p, 1.0 / p)
    step = 0.5 / np.linalg.eigvalsh(sigma)[-1]
    for _ in range(iters):
        g = 2 * sigma @ w
        w -= step * (g - g.mean())
    return w


def test_gmv_closed_forms():
    np.testing.assert_allclose(gmv_weights(MomentInputs(np.eye(3), np.zeros(3))).w, np.full(3, 1 / 3), atol=1e-15)
    np.testing.assert_allclose(gmv_weights(MomentInputs(np.diag([1.0, 2.0]), np.zeros(2))).w, [1 / 3, 2 / 3], atol=1e-15)


def test_gmv_matches_projected_gradient(rng):
    theta = _spd(rng, 6, 10.0)
    sigma = np.linalg.inv(theta)
    w = gmv_weights(MomentInputs(theta, np.zeros(6))).w
    np.testing.assert_allclose(w, _projected_gradient_gmv(sigma), atol=1e-6)


def test_gmv_scale_invariance(rng):
    theta = _spd(rng, 5)
    m = rng.standard_normal(5)
    for c in (0.5, 2.0, 8.0):
        assert np.array_equal(gmv_weights(MomentInputs(c * theta, m)).w, gmv_weights(MomentInputs(theta, m)).w)


def test_gmv_optimal_against_perturbations(rng):
    theta = _spd(rng, 8)
    w = gmv_weights(MomentInputs(theta, np.zeros(8))).w
    base = portfolio_variance(w, theta)
    d = rng.standard_normal((1000, 8))
    d -= d.mean(axis=1, keepdims=True)
    sigma = np.linalg.inv(theta)
    worst = min(float((w + x) @ sigma @ (w + x)) for x in d)
    assert worst >= base - 1e-10


def test_mwc_examples(rng):
    w = mwc_weights(MomentInputs(np.eye(2), np.array([0.1, 0.2])), 0.15).w
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)
    with pytest.raises(DegenerateFrontierError):
        mwc_weights(MomentInputs(_spd(rng, 4), np.full(4, 0.3)), 0.3)
    theta = _spd(rng, 5)
    m = rng.standard_normal(5)
    s = exposure_scalars(MomentInputs(theta, m))
    mu = 1.1 * s.b / s.a
    w = mwc_weights(MomentInputs(theta, m), mu).w
    np.testing.assert_allclose(w, _kkt(np.linalg.inv(theta), np.vstack([np.ones(5), m]), np.array([1.0, mu])), atol=1e-6)


def test_mean_orthogonal_to_frontier():
    theta = np.eye(2)
    with pytest.raises(DegenerateFrontierError):
        mwc_weights(MomentInputs(theta, np.array([1.0, -1.0])), 0.1)


@settings(max_examples=50)
@given(p=st.integers(2, 12), seed=st.integers(0, 2**31), mu=st.floats(-2, 2), sigma=st.floats(0.01, 3))
def test_constraints_hold(p, seed, mu, sigma):
    rng = np.random.default_rng(seed)
    theta = _spd(rng, p)
    m = rng.normal(0.3, 1.0, p)
    inp = MomentInputs(theta, m)
    assert gmv_weights(inp).w.sum() == pytest.approx(1.0, abs=1e-8)
    w = mwc_weights(inp, mu).w
    assert w.sum() == pytest.approx(1.0, abs=1e-8)
    assert m @ w == pytest.approx(mu, abs=1e-8 * max(1.0, abs(mu)))
    wr = mrc_weights(inp, sigma).w
    theta_mm = squared_sharpe(inp)
    assert m @ wr == pytest.approx(sigma * math.sqrt(theta_mm), rel=1e-8)
    assert portfolio_variance(wr, theta) == pytest.approx(sigma**2, rel=1e-8)


def test_mrc_examples(rng):
    p = 7
    w = mrc_weights(MomentInputs(np.eye(p), np.ones(p)), 0.013).w
    np.testing.assert_allclose(w, np.full(p, 0.013 / math.sqrt(p)), atol=1e-16)
    theta = _spd(rng, 5)
    m = rng.standard_normal(5)
    w = mrc_weights(MomentInputs(theta, m), 0.4).w
    np.testing.assert_allclose(w / (theta @ m), 0.4 / math.sqrt(m @ theta @ m), rtol=1e-12)
    with pytest.raises(ZeroMeanError):
        mrc_weights(MomentInputs(theta, np.zeros(5)), 0.4)
    with pytest.raises(ValueError):
        mrc_weights(MomentInputs(theta, m), -1.0)


def test_exposure_scalars_examples(rng):
    s = exposure_scalars(MomentInputs(np.eye(2), np.ones(2)))
    assert (s.a, s.b, s.d) == (1.0, 1.0, 1.0)
    assert s.g == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    z = exposure_scalars(MomentInputs(np.eye(3), np.zeros(3)))
    assert z.b == z.d == z.g == 0.0
    theta = _spd(rng, 9)
    r = exposure_scalars(MomentInputs(theta, rng.standard_normal(9)))
    assert r.g**2 == pytest.approx(r.d / 9, rel=1e-12)
    assert r.a * r.d - r.b**2 >= -1e-12


def test_risk_exposure_examples(rng):
    for p in (1, 4, 10):
        assert risk_exposure(MomentInputs(np.eye(p), np.ones(p)), "GMV") == pytest.approx(1 / p, rel=1e-15)
    inp = MomentInputs(np.eye(2), np.array([1.0, 0.0]))
    assert risk_exposure(inp, "MWC", mu=0.5) == pytest.approx(0.5, abs=1e-15)
    theta = _spd(rng, 6)
    inp = MomentInputs(theta, rng.standard_normal(6))
    assert risk_exposure(inp, "GMV") == pytest.approx(portfolio_variance(gmv_weights(inp).w, theta), rel=1e-8)
    # the plug-in MRC exposure is sigma^2 sqrt(theta), the direct quadratic form is sigma^2
    s = 0.7
    assert risk_exposure(inp, "MRC", sigma=s) == pytest.approx(s**2 * math.sqrt(squared_sharpe(inp)), rel=1e-12)
    assert portfolio_variance(mrc_weights(inp, s).w, theta) == pytest.approx(s**2, rel=1e-8)


def test_squared_sharpe(rng):
    assert squared_sharpe(MomentInputs(np.eye(2), np.zeros(2))) == 0.0
    assert squared_sharpe(MomentInputs(np.eye(2), np.array([3.0, 4.0]))) == pytest.approx(25.0, abs=1e-13)
    theta = _spd(rng, 7)
    m = rng.standard_normal(7)
    L = np.linalg.cholesky(theta)
    assert squared_sharpe(MomentInputs(theta, m)) == pytest.approx(float(np.sum((L.T @ m) ** 2)), rel=1e-12)


def test_dispatch_and_validation():
    inp = MomentInputs(np.eye(2), np.array([0.1, 0.2]))
    assert weights(inp, "gmv").formulation == "GMV"
    with pytest.raises(ValueError):
        weights(inp, "MWC")
    with pytest.raises(ValueError):
        weights(inp, "MRC")
    with pytest.raises(ValueError):
        weights(inp, "CVaR")
    with pytest.raises(ValueError):
        MomentInputs(np.eye(3), np.zeros(2))
