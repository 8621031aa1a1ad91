import json

import numpy as np
import pytest

from conftest import linear_system_pairs, random_pairs, same_multiset
from gkdmd.bench import KoopmanQuadratic, make_dataset
from gkdmd.errors import InputError, ModelIOError
from gkdmd.kernels import GaussianKernel, LinearKernel, PolynomialKernel
from gkdmd.model import ReducedModel, SnapshotPairs, fit, load, save
from gkdmd.oracle import FeatureMap, edmd_exact, exact_dmd_matrix

POLY = PolynomialKernel(2, 1.0)


def test_snapshot_pairs_layout():
    t1 = np.arange(8.0).reshape(2, 4)
    t2 = -np.arange(8.0).reshape(2, 4)
    d = SnapshotPairs.from_trajectories([t1, t2])
    assert (d.p, d.m, d.n_traj, d.t_prime) == (2, 6, 2, 4)
    np.testing.assert_array_equal(d.X[:, 3:], t2[:, :3])
    np.testing.assert_array_equal(d.Y[:, :3], t1[:, 1:])


@pytest.mark.parametrize("build", [
    lambda: SnapshotPairs(np.ones((2, 3)), np.ones((2, 4)), 1, 4),
    lambda: SnapshotPairs(np.ones((2, 3)), np.ones((2, 3)), 2, 4),
    lambda: SnapshotPairs(np.array([[np.nan]]), np.ones((1, 1)), 1, 2),
    lambda: SnapshotPairs.from_trajectories([]),
    lambda: SnapshotPairs.from_trajectories([np.ones((2, 1))]),
    lambda: SnapshotPairs.from_trajectories([np.ones((2, 3)), np.ones((2, 4))]),
])
def test_snapshot_pairs_invalid(build):
    with pytest.raises(InputError):
        build()


@pytest.mark.parametrize("route", ["compressed", "paired"])
def test_matches_explicit_feature_space_operator(rng, route):
    for _ in range(6):
        p = int(rng.integers(1, 4))
        d = random_pairs(rng, p, 2, int(rng.integers(3, 6)))
        fm = FeatureMap.for_kernel(POLY, p)
        for k in range(1, d.m + 1):
            ref = edmd_exact(d, fm, k)
            model = fit(d, POLY, k, eig_route=route)
            assert model.rank_Z == ref.rank_Z
            assert same_multiset(model.lambdas, ref.eigvals, 1e-7)


def test_routes_agree(rng):
    d = random_pairs(rng, 3, 3, 4)
    k = 5
    a = fit(d, GaussianKernel(1.5), k)
    b = fit(d, GaussianKernel(1.5), k, eig_route="paired")
    np.testing.assert_allclose(a.lambdas, b.lambdas, atol=1e-8)
    theta = rng.normal(size=3)
    from gkdmd.predict import amplitudes, eigenfunctions

    ga = amplitudes(a, eigenfunctions(a, theta), 3).g
    gb = amplitudes(b, eigenfunctions(b, theta), 3).g
    np.testing.assert_allclose(ga, gb, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kernel", [POLY, GaussianKernel(2.0), LinearKernel()], ids=str)
def test_biorthonormal(rng, kernel):
    d = random_pairs(rng, 4, 3, 5)
    for k in (1, 3, d.m):
        model = fit(d, kernel, k)
        C = model.biorthogonality()
        np.testing.assert_allclose(C, np.eye(model.k), atol=1e-9)


def test_eigen_triples_are_eigenpairs_in_feature_space(rng):
    d = random_pairs(rng, 2, 2, 6)
    fm = FeatureMap.for_kernel(POLY, 2)
    A, B = fm.apply(d.X), fm.apply(d.Y)
    for k in (2, 4):
        model = fit(d, POLY, k)
        A_k = edmd_exact(d, fm, k).operator
        right = B @ model.amplitude_basis
        left = A @ model.R.T @ model.eig.xi
        np.testing.assert_allclose(A_k @ right, right * model.lambdas, atol=1e-8)
        np.testing.assert_allclose(A_k.T @ left, left * model.lambdas.conj(), atol=1e-8)


def test_rank_bookkeeping(rng):
    d = random_pairs(rng, 2, 3, 6)
    model = fit(d, LinearKernel(), 10)
    assert model.rank_A == 2 and model.rank_Z == 2 and model.k == 2
    assert 0 <= model.k <= model.rank_Z <= model.rank_A <= model.m


def test_k_out_of_range(rng):
    d = random_pairs(rng, 2, 1, 4)
    for k in (0, 4, 2.5):
        with pytest.raises(InputError):
            fit(d, POLY, k)
    with pytest.raises(InputError):
        fit(d, POLY, 1, eig_route="other")


def test_zero_successors_give_empty_model(rng):
    X = rng.normal(size=(2, 5))
    model = fit(SnapshotPairs(X, np.zeros_like(X), 1, 6), LinearKernel(), 3)
    assert model.k == 0 and model.rank_Z == 0
    assert model.lambdas.size == 0


def test_linear_kernel_reduces_to_dmd(rng):
    d, L = linear_system_pairs(rng, 6, 3, 4)
    model = fit(d, LinearKernel(), d.m)
    # rank 6 in state space; spectrum of Y X^+ is that of L
    assert model.k == 6
    assert same_multiset(model.lambdas, np.linalg.eigvals(L), 1e-8)
    assert same_multiset(model.lambdas, np.linalg.eigvals(exact_dmd_matrix(d.X, d.Y)), 1e-8)


def test_koopman_quadratic_full_rank_spectrum():
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 10, 10, seed=0)
    d = ds.pairs
    model = fit(d, POLY, d.m)
    assert model.rank_Z == 6
    lam = np.sort_complex(model.lambdas)
    for target in (1.0, 0.9, 0.81, 0.5):
        assert np.min(np.abs(lam - target)) < 1e-8


def test_real_data_conjugate_pairs(rng):
    d = random_pairs(rng, 3, 2, 8)
    model = fit(d, GaussianKernel(1.0), 8)
    lam = model.lambdas
    assert same_multiset(lam, lam.conj(), 1e-8)


def test_save_load_round_trip(tmp_path, rng):
    d = random_pairs(rng, 3, 2, 6)
    model = fit(d, GaussianKernel(1.3), 4)
    path = tmp_path / "m.json"
    save(model, path)
    back = load(path)
    for name in ("X", "Y", "R", "S_k", "E"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
    assert np.array_equal(back.lambdas, model.lambdas)
    assert np.array_equal(back.eig.xi, model.eig.xi)
    assert np.array_equal(back.eig.zeta, model.eig.zeta)
    assert back.kernel == model.kernel and back.k == model.k
    save(back, tmp_path / "m2.json")
    assert (tmp_path / "m2.json").read_bytes() == path.read_bytes()


def test_fit_is_deterministic(tmp_path, rng):
    d = random_pairs(rng, 3, 2, 6)
    save(fit(d, POLY, 4), tmp_path / "a.json")
    save(fit(d, POLY, 4), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def _model_dict(rng):
    return fit(random_pairs(rng, 2, 1, 5), POLY, 2).to_dict()


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("E"),
    lambda d: d.update(extra=1),
    lambda d: d.update(version=99),
    lambda d: d.update(k=9),
    lambda d: d.update(R=[[1.0]]),
    lambda d: d.update(kernel={"family": "cosine"}),
    lambda d: d.update(rank_A=0),
])
def test_load_rejects_bad_models(tmp_path, rng, mutate):
    d = _model_dict(rng)
    mutate(d)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ModelIOError):
        load(path)


def test_load_rejects_unreadable(tmp_path):
    with pytest.raises(ModelIOError):
        load(tmp_path / "missing.json")
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(ModelIOError):
        load(tmp_path / "x.json")
    (tmp_path / "y.json").write_text("[1, 2]")
    with pytest.raises(ModelIOError):
        load(tmp_path / "y.json")


def test_from_dict_equivalent(rng):
    d = _model_dict(rng)
    m = ReducedModel.from_dict(json.loads(json.dumps(d)))
    assert m.to_dict() == d


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_koopman_quadratic_matches_oracle_at_every_rank(k):
    # the rank-k optimum on this data is not the exact Koopman triple for k < 6
    d = make_dataset(KoopmanQuadratic(0.9, 0.5), 10, 10, seed=0).pairs
    ref = edmd_exact(d, FeatureMap.for_kernel(POLY, 2), k).eigvals
    assert same_multiset(fit(d, POLY, k).lambdas, ref, 1e-8)
