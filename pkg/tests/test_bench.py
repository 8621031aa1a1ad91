import csv

import numpy as np
import pytest

from gkdmd.bench import (
    EmbeddedLorenz,
    KoopmanQuadratic,
    compare,
    gen_koopman_quadratic,
    gen_lorenz_embedded,
    load_dataset,
    make_dataset,
    reconstruction_error,
    save_dataset,
    system_from_meta,
    write_error_maps_csv,
    write_per_trajectory_csv,
    write_report_csv,
)
from gkdmd.errors import InputError, MetricError
from gkdmd.kernels import GaussianKernel, LinearKernel, PolynomialKernel

POLY = PolynomialKernel(2, 1.0)


def test_koopman_quadratic_observables_are_linear():
    traj = gen_koopman_quadratic(0.9, 0.5, [0.7, -0.3], 12)
    x1, x2 = traj.states
    np.testing.assert_allclose(x1[1:], 0.9 * x1[:-1], rtol=1e-14)
    # x2 - x1^2 decays at rate mu
    c = x2 - x1**2
    np.testing.assert_allclose(c[1:], 0.5 * c[:-1], rtol=1e-12, atol=1e-15)
    with pytest.raises(InputError):
        gen_koopman_quadratic(0.9, 0.5, [0.0, 0.0, 0.0], 5)


def test_lorenz_embedding_shape_and_determinism():
    a = gen_lorenz_embedded(10.0, 28.0, 8 / 3, [1.0, 1.0, 20.0], 15, 16, 0.01, 3)
    b = gen_lorenz_embedded(10.0, 28.0, 8 / 3, [1.0, 1.0, 20.0], 15, 16, 0.01, 3)
    assert a.states.shape == (16, 15)
    assert np.array_equal(a.states, b.states)
    c = gen_lorenz_embedded(10.0, 28.0, 8 / 3, [1.0, 1.0, 20.0], 15, 16, 0.01, 4)
    assert not np.array_equal(a.states, c.states)


def test_lorenz_integrator_converges():
    # RK4: halving the step changes the state by O(dt^4)
    coarse = EmbeddedLorenz(p=3, embedding="identity", substeps=2).integrate([1.0, 1.0, 20.0], 11)
    fine = EmbeddedLorenz(p=3, embedding="identity", dt=0.005, substeps=4).integrate([1.0, 1.0, 20.0], 11)
    assert np.max(np.abs(coarse - fine)) < 1e-5


def test_make_dataset_split_and_meta():
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 4, 6, seed=3)
    assert len(ds.train) == len(ds.test) == 4
    for tr, te in zip(ds.train, ds.test):
        assert tr.states.shape == te.states.shape == (2, 6)
        np.testing.assert_array_equal(tr.states[:, -1], te.states[:, 0])
        assert np.all(np.abs(tr.theta0) <= 1.0)
    assert ds.pairs.m == 4 * 5
    assert ds.meta["seeds"] == {"sample_seed": 3}
    assert system_from_meta(ds.meta) == KoopmanQuadratic(0.9, 0.5)


def test_make_dataset_invalid():
    sys_ = KoopmanQuadratic()
    with pytest.raises(InputError):
        make_dataset(sys_, 0, 5)
    with pytest.raises(InputError):
        make_dataset(sys_, 2, 1)
    with pytest.raises(InputError):
        make_dataset(sys_, 2, 5, hypercube=[(1.0, 0.0), (0.0, 1.0)])


def test_dataset_round_trip_and_bytes(tmp_path):
    ds = make_dataset(KoopmanQuadratic(0.8, 0.3), 3, 5, seed=11)
    files_a = save_dataset(ds, tmp_path / "a")
    save_dataset(make_dataset(KoopmanQuadratic(0.8, 0.3), 3, 5, seed=11), tmp_path / "b")
    for f in files_a:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    back = load_dataset(tmp_path / "a")
    for t0, t1 in zip(ds.train + ds.test, back.train + back.test):
        assert np.array_equal(t0.states, t1.states)
    assert back.meta == ds.meta


def test_reconstruction_error_definition():
    traj = np.array([[1.0, 2.0, 4.0]])
    eps, details = reconstruction_error(lambda x: 2 * x + 1, [traj])
    # predictions 3, 5 against 2, 4
    assert [d.t for d in details] == [1, 2]
    np.testing.assert_allclose([d.rel_err for d in details], [0.5, 0.25])
    assert eps == pytest.approx(np.sqrt(0.25 + 0.0625))
    eps0, _ = reconstruction_error(lambda x: 2 * x, [traj])
    assert eps0 == 0.0


def test_reconstruction_error_zero_reference():
    with pytest.raises(MetricError):
        reconstruction_error(lambda x: x, [np.array([[1.0, 0.0]])])


def test_compare_grid_and_outputs(tmp_path):
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 3, 6, seed=1)
    rep = compare(ds, ["gkdmd", "kdmd"], [POLY, LinearKernel()], [1, 3])
    assert [(r["method"], r["kernel"], r["k"]) for r in rep.rows] == [
        (m, kr, k) for m in ("gkdmd", "kdmd")
        for kr in ("polynomial:degree=2,offset=1", "linear") for k in (1, 3)
    ]
    for r in rep.rows:
        if "error" not in r:
            assert r["eps_rec"] == pytest.approx(rep.eps_from_details(r["method"], r["kernel"], r["k"]),
                                                 rel=1e-12)
    write_report_csv(rep, tmp_path / "r.csv")
    write_per_trajectory_csv(rep, tmp_path / "t.csv")
    write_error_maps_csv(rep, tmp_path / "e.csv")
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert len(rows) == 8 and float(rows[0]["fit_seconds"]) >= 0
    assert len(list(csv.reader((tmp_path / "t.csv").open()))) == 1 + 8 * 3 * 5
    assert next(csv.reader((tmp_path / "e.csv").open()))[-2:] == ["e0", "e1"]


def test_compare_is_deterministic_across_jobs(tmp_path):
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 3, 6, seed=2)
    for jobs, name in ((1, "a.csv"), (3, "b.csv")):
        rep = compare(ds, ["gkdmd", "kdmd"], [POLY, GaussianKernel(1.0)], [2, 4], jobs=jobs)
        write_report_csv(rep, tmp_path / name, timings=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_compare_records_failures():
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 2, 4, seed=0)
    # a zero reference state triggers the metric error inside the cell
    ds.test[0].states[:, 1] = 0.0
    rep = compare(ds, ["gkdmd"], [POLY], [2])
    assert "MetricError" in rep.rows[0]["error"]
    assert np.isnan(rep.rows[0]["eps_rec"])


def test_compare_invalid():
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 2, 4, seed=0)
    with pytest.raises(InputError):
        compare(ds, ["dmd"], [POLY], [1])
    with pytest.raises(InputError):
        compare(ds, ["gkdmd"], [POLY], [99])
    with pytest.raises(InputError):
        compare(ds, [], [POLY], [1])


def test_koopman_rank_sweep_improves():
    ds = make_dataset(KoopmanQuadratic(0.9, 0.5), 10, 10, seed=0)
    rep = compare(ds, ["gkdmd"], [POLY], [1, 6])
    eps = rep.eps_table()
    assert eps[("gkdmd", POLY.label(), 6)] <= eps[("gkdmd", POLY.label(), 1)]
