"""Both kernel backends must compute the same numbers: the numba path is an
optimization of the numpy reference, never a different function."""
import numpy as np
import pytest

from miracle import kernels


RNG = np.random.default_rng(123)
SHAPES = [(7,), (5, 3), (64, 17), (1, 1)]


def arrays(shape):
    return (RNG.standard_normal(shape) * 3,
            RNG.standard_normal(shape) * 3,
            RNG.standard_normal(shape))


@pytest.mark.parametrize("shape", SHAPES)
def test_softplus_matches_reference(shape):
    x = RNG.standard_normal(shape) * 20
    np.testing.assert_allclose(kernels.softplus(x), kernels.np_softplus(x),
                               rtol=0, atol=1e-15)


@pytest.mark.parametrize("shape", SHAPES)
def test_sigmoid_matches_reference(shape):
    x = RNG.standard_normal(shape) * 20
    np.testing.assert_allclose(kernels.sigmoid(x), kernels.np_sigmoid(x),
                               rtol=0, atol=1e-16)


@pytest.mark.parametrize("shape", SHAPES)
def test_sample_gaussian_matches_reference(shape):
    mu, rho, eps = arrays(shape)
    np.testing.assert_allclose(kernels.sample_gaussian(mu, rho, eps),
                               kernels.np_sample_gaussian(mu, rho, eps),
                               rtol=0, atol=1e-15)


@pytest.mark.parametrize("shape", SHAPES)
def test_rho_grad_matches_reference(shape):
    d, eps, rho = arrays(shape)
    np.testing.assert_allclose(kernels.rho_grad(d, eps, rho),
                               kernels.np_rho_grad(d, eps, rho),
                               rtol=1e-14, atol=0)


def test_fma_is_sample_with_precomputed_sigma():
    mu, rho, eps = arrays((11, 4))
    sigma = kernels.softplus(rho)
    np.testing.assert_array_equal(kernels.fma(mu, sigma, eps),
                                  mu + sigma * eps)


def test_mul3_is_plain_product():
    a, b, c = arrays((6, 9))
    np.testing.assert_array_equal(kernels.mul3(a, b, c), a * b * c)


@pytest.mark.parametrize("gamma", [0.0, 2.0, 4.0])
def test_focal_terms_match_reference(gamma):
    logits = RNG.standard_normal(200) * 6
    ys = (RNG.random(200) < 0.4).astype(np.int64)
    loss_k, grad_k = kernels.focal_terms(logits, ys, 0.8, gamma)
    loss_n, grad_n = kernels.np_focal_terms(logits, ys, 0.8, gamma)
    np.testing.assert_allclose(loss_k, loss_n, rtol=1e-14, atol=0)
    np.testing.assert_allclose(grad_k, grad_n, rtol=1e-13, atol=1e-300)


def test_extreme_logits_stay_finite():
    logits = np.array([-800.0, -50.0, 0.0, 50.0, 800.0])
    ys = np.array([1, 0, 1, 0, 1], dtype=np.int64)
    loss, grad = kernels.focal_terms(logits, ys, 0.8, 4.0)
    assert np.all(np.isfinite(loss)) and np.all(np.isfinite(grad))
    assert np.all(np.isfinite(kernels.softplus(np.array([800.0, -800.0]))))


def test_backend_reports_env_choice():
    assert kernels.BACKEND in ("numba", "numpy")
    assert kernels.BACKEND == ("numpy" if kernels._FORCE_NUMPY or
                               not kernels.HAVE_NUMBA else "numba")
