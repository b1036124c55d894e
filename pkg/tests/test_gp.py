import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codesign_bo.domain import BoxDomain
from codesign_bo.gp import (
    Dataset,
    FitConfig,
    Hyperparameters,
    NumericDegeneracyError,
    cholesky_with_jitter,
    condition,
    fit,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    _neg_lml_and_grad,
)

from oracles import gp_explicit


def random_problem(rng, t_max=20, d_max=3):
    t = int(rng.integers(1, t_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.uniform(0, 1, size=(t, d))
    y = rng.normal(size=t)
    hyper = Hyperparameters(
        signal_variance=float(rng.uniform(0.3, 3.0)),
        lengthscales=tuple(rng.uniform(0.1, 2.0, size=d)),
        noise_variance=float(rng.uniform(1e-3, 1e-1)),
    )
    Xq = rng.uniform(0, 1, size=(5, d))
    return X, y, hyper, Xq


def test_kernel_eval_known_values():
    h = Hyperparameters(2.0, (0.5,), 1e-6)
    assert kernel_eval([0.3], [0.3], h) == 2.0
    # distance of one lengthscale: 2 * exp(-1/2)
    assert kernel_eval([0.0], [0.5], h) == pytest.approx(1.2130613194252668, abs=1e-15)


def test_kernel_matrix_symmetric_and_matches_pointwise():
    rng = np.random.default_rng(1)
    A = rng.uniform(size=(6, 2))
    h = Hyperparameters(1.3, (0.2, 0.9), 1e-6)
    K = kernel_matrix(A, A, h)
    assert np.allclose(K, K.T, atol=1e-15)
    for i in range(6):
        for j in range(6):
            assert K[i, j] == pytest.approx(kernel_eval(A[i], A[j], h), abs=1e-14)


def test_kernel_dimension_mismatch_raises():
    h = Hyperparameters(1.0, (0.5, 0.5), 1e-6)
    with pytest.raises(ValueError):
        kernel_eval([0.1], [0.2], h)


def test_posterior_matches_explicit_inverse_on_fixed_case():
    X = np.array([[0.1], [0.4], [0.9]])
    y = np.array([0.5, -1.0, 0.25])
    h = Hyperparameters(1.0, (0.3,), 1e-2)
    model = condition(Dataset(X, y), h, BoxDomain.unit(1), standardize=False)
    Xq = np.array([[0.0], [0.25], [0.6]])
    mean, var = model.predict_unit(Xq, standardized=True)
    m_ref, v_ref, lml_ref = gp_explicit(X, y, 1.0, (0.3,), 1e-2, Xq)
    # frozen from the explicit-inverse oracle
    assert np.allclose(m_ref, [0.8153380012, -0.3155776129, -0.9097065706], atol=1e-9)
    assert np.allclose(v_ref, [0.0740717244, 0.0330558767, 0.1379365415], atol=1e-9)
    assert lml_ref == pytest.approx(-4.2045867296, abs=1e-9)
    assert np.allclose(mean, m_ref, atol=1e-10)
    assert np.allclose(var, v_ref, atol=1e-10)
    assert model.log_likelihood == pytest.approx(lml_ref, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_posterior_and_evidence_match_oracle(seed):
    rng = np.random.default_rng(seed)
    X, y, h, Xq = random_problem(rng)
    model = condition(Dataset(X, y), h, BoxDomain.unit(X.shape[1]), standardize=False)
    mean, var = model.predict_unit(Xq, standardized=True)
    m_ref, v_ref, lml_ref = gp_explicit(X, y, h.signal_variance, h.lengthscales, h.noise_variance, Xq)
    assert np.allclose(mean, m_ref, atol=1e-8, rtol=0)
    assert np.allclose(var, v_ref, atol=1e-8, rtol=0)
    assert log_marginal_likelihood(Dataset(X, y), h) == pytest.approx(lml_ref, abs=1e-8)


def test_interpolates_noise_free_data():
    X = np.linspace(0, 1, 6)[:, None]
    y = np.sin(5 * X[:, 0])
    h = Hyperparameters(1.0, (0.3,), 1e-10)
    model = condition(Dataset(X, y), h)
    mean, var = model.predict(X)
    assert np.allclose(mean, y, atol=1e-5)
    assert np.all(var <= 1e-6)
    assert np.all(var >= 0)


def test_variance_is_prior_far_from_data():
    X = np.array([[0.0]])
    h = Hyperparameters(1.7, (0.01,), 1e-6)
    model = condition(Dataset(X, [1.0]), h, BoxDomain((0.0,), (1.0,)), standardize=False)
    _, var = model.predict(np.array([1.0]))
    assert var == pytest.approx(1.7, rel=1e-12)


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(8, 2))
    y = rng.normal(size=8)
    theta = np.log([0.8, 0.3, 0.6, 0.02])
    _, g = _neg_lml_and_grad(theta, X, y, None)
    h = 1e-6
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        fd = (_neg_lml_and_grad(theta + e, X, y, None)[0] - _neg_lml_and_grad(theta - e, X, y, None)[0]) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_fit_recovers_lengthscale_order():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(60, 2))
    # varies quickly along x0, slowly along x1
    y = np.sin(12 * X[:, 0]) + 0.2 * X[:, 1]
    model = fit(Dataset(X, y), FitConfig(domain=BoxDomain.unit(2), seed=0))
    ls = model.hyper.lengthscales
    assert ls[0] < 0.5
    assert ls[1] > 10 * ls[0]


def test_fit_recovers_generating_lengthscale():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(80, 1))
    h = Hyperparameters(1.0, (0.2,), 1e-4)
    K = kernel_matrix(X, X, h) + 1e-4 * np.eye(80)
    y = np.linalg.cholesky(K) @ rng.normal(size=80)
    model = fit(Dataset(X, y), FitConfig(domain=BoxDomain.unit(1), seed=1, standardize=False))
    assert model.hyper.lengthscales[0] == pytest.approx(0.2, rel=0.35)


def test_fit_is_deterministic_for_a_seed():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(10, 2))
    y = rng.normal(size=10)
    a = fit(Dataset(X, y), FitConfig(seed=42))
    b = fit(Dataset(X, y), FitConfig(seed=42))
    assert a.hyper == b.hyper


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit(Dataset([[0.5]], [1.0]))


def test_duplicate_inputs_handled_by_jitter():
    X = np.array([[0.2], [0.2], [0.7]])
    h = Hyperparameters(1.0, (0.5,), 0.0)
    model = condition(Dataset(X, [1.0, 1.0, 0.0]), h)
    assert model.jitter > 0
    assert np.isfinite(model.predict(np.array([0.4]))[0])


def test_jitter_exhaustion_raises():
    K = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NumericDegeneracyError):
        cholesky_with_jitter(K, 1.0)


def test_dataset_rejects_bad_input():
    with pytest.raises(ValueError):
        Dataset([[0.1], [0.2]], [1.0])
    with pytest.raises(ValueError):
        Dataset([[0.1]], [np.nan])


def test_mean_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 3, size=(12, 2))
    y = np.cos(X[:, 0]) * X[:, 1]
    dom = BoxDomain((-2.0, -2.0), (3.0, 3.0))
    model = condition(Dataset(X, y), Hyperparameters(1.0, (0.3, 0.5), 1e-6), dom)
    q = np.array([0.5, 0.7])
    g = model.predict_mean_gradient(q)
    h = 1e-6
    u = dom.to_unit(q)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        up = model.predict(dom.from_unit(u + e))[0]
        dn = model.predict(dom.from_unit(u - e))[0]
        assert g[k] == pytest.approx((up - dn) / (2 * h), rel=1e-5)
