import warnings

import numpy as np
import pytest

from conftest import linear_system_pairs, random_pairs, same_multiset
from gkdmd.errors import InputError
from gkdmd.kernels import GaussianKernel, LinearKernel, PolynomialKernel
from gkdmd.oracle import FeatureMap, edmd_exact, exact_dmd_matrix, kdmd_fit, kdmd_predict

POLY = PolynomialKernel(2, 1.0)


def test_feature_map_dimension_and_order():
    fm = FeatureMap("polynomial", 2, 2, 1.0)
    assert fm.D == 6
    z = np.array([2.0, 3.0])
    s = np.sqrt(2.0)
    np.testing.assert_allclose(fm.apply(z), [1.0, s * 2, s * 3, 4.0, s * 6, 9.0])


@pytest.mark.parametrize("kernel", [POLY, PolynomialKernel(3, 0.3), PolynomialKernel(2, 0.0), LinearKernel()],
                         ids=str)
def test_feature_inner_products(kernel, rng):
    fm = FeatureMap.for_kernel(kernel, 3)
    U, V = rng.normal(size=(3, 5)), rng.normal(size=(3, 4))
    np.testing.assert_allclose(fm.apply(U).T @ fm.apply(V), kernel.gram(U, V), rtol=1e-12, atol=1e-12)


def test_feature_map_rejects():
    with pytest.raises(InputError):
        FeatureMap.for_kernel(GaussianKernel(1.0), 2)
    with pytest.raises(InputError):
        FeatureMap("polynomial", 2, 2, 1.0).apply(np.ones(3))


def test_edmd_residuals(rng):
    d = random_pairs(rng, 2, 2, 6)
    fm = FeatureMap.for_kernel(POLY, 2)
    res = edmd_exact(d, fm, d.m)
    assert np.all(np.diff(res.residuals) <= 1e-10 * res.residuals[0])
    A, B = fm.apply(d.X), fm.apply(d.Y)
    lsq = np.linalg.norm(B - B @ np.linalg.pinv(A) @ A)
    assert res.residuals[res.rank_Z - 1] == pytest.approx(lsq, rel=1e-8, abs=1e-10)


def test_edmd_full_rank_is_least_squares(rng):
    d = random_pairs(rng, 2, 1, 8)
    fm = FeatureMap.for_kernel(POLY, 2)
    res = edmd_exact(d, fm, d.m)
    A, B = fm.apply(d.X), fm.apply(d.Y)
    np.testing.assert_allclose(res.operator @ A, B @ np.linalg.pinv(A) @ A, atol=1e-9)


def test_exact_dmd_matrix(rng):
    d, L = linear_system_pairs(rng, 4, 3, 4)
    np.testing.assert_allclose(exact_dmd_matrix(d.X, d.Y), L, atol=1e-10)


def test_kdmd_linear_kernel(rng):
    d, L = linear_system_pairs(rng, 6, 2, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = kdmd_fit(d, LinearKernel(), d.m)
    assert same_multiset(model.eigvals, np.linalg.eigvals(L), 1e-8)
    theta = rng.normal(size=6)
    np.testing.assert_allclose(kdmd_predict(model, theta, 4), np.linalg.matrix_power(L, 3) @ theta,
                               rtol=1e-8, atol=1e-10)


def test_kdmd_rank_deficiency_warns(rng):
    d = random_pairs(rng, 2, 2, 6)
    with pytest.warns(RuntimeWarning, match="rank"):
        model = kdmd_fit(d, LinearKernel(), 4)
    assert model.k == 2


def test_kdmd_modes_least_squares(rng):
    d = random_pairs(rng, 2, 2, 5)
    model = kdmd_fit(d, GaussianKernel(1.0), 5)
    Phi = np.array([model.eigenfunctions(x) for x in d.X.T])

    def resid(M):
        return np.linalg.norm(d.X.T - Phi @ M.T)

    base = resid(model.modes)
    for _ in range(10):
        D = rng.normal(size=model.modes.shape) + 1j * rng.normal(size=model.modes.shape)
        assert resid(model.modes + 1e-3 * D) >= base


def test_kdmd_validation(rng):
    d = random_pairs(rng, 2, 1, 4)
    with pytest.raises(InputError):
        kdmd_fit(d, POLY, 0)
    model = kdmd_fit(d, POLY, 2)
    with pytest.raises(InputError):
        kdmd_predict(model, np.zeros(2), 1)
