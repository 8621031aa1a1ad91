"""Benchmark systems, dataset protocol, reconstruction error and rank sweeps.

Dataset protocol: ``N`` initial conditions are drawn uniformly from a
hypercube, each is simulated for ``T'`` states to form the training pairs,
and the test trajectories are the prolongation of the training ones (test
trajectory ``j`` starts at the last training state of trajectory ``j`` and
has the same length).

The reconstruction error is the teacher-forced one-step error::

    eps_rec = sqrt( sum_j sum_t |x2(x_t) - x_{t+1}|^2 / |x_{t+1}|^2 )

where ``x2(x)`` is the model prediction one step ahead of ``x``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GKDMDError, InputError, MetricError, ModelIOError, NumericError
from .kernels import Kernel
from .model import SnapshotPairs, fit
from .oracle import kdmd_fit, kdmd_predict
from .predict import PreimageConfig, predict

log = logging.getLogger(__name__)

__all__ = [
    "Trajectory",
    "KoopmanQuadratic",
    "EmbeddedLorenz",
    "Dataset",
    "BenchReport",
    "gen_koopman_quadratic",
    "gen_lorenz_embedded",
    "make_dataset",
    "reconstruction_error",
    "compare",
    "save_dataset",
    "load_dataset",
    "write_report_csv",
    "write_per_trajectory_csv",
    "write_error_maps_csv",
    "SYSTEMS",
    "METHODS",
]

EPS_DEN = 1e-14
METHODS = ("gkdmd", "kdmd")
REPORT_COLUMNS = ("method", "kernel", "k", "eps_rec", "fit_seconds", "predict_seconds")


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    system_id: str
    params: dict = field(default_factory=dict)
    theta0: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[1] < 2:
            raise InputError(f"trajectory needs shape (p, T') with T' >= 2, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NumericError(f"trajectory of {self.system_id} contains non-finite states")
        object.__setattr__(self, "states", s)


# -- systems -------------------------------------------------------------------


@dataclass(frozen=True)
class KoopmanQuadratic:
    """``x1' = lam x1``, ``x2' = mu x2 + (lam^2 - mu) x1^2``.

    Exactly linear on the observables ``(x1, x2, x1^2)`` with eigenvalues
    ``lam``, ``mu`` and ``lam^2``.
    """

    lam: float = 0.9
    mu: float = 0.5
    system_id = "koopman-quadratic"
    seed_dim = 2

    def step(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.lam * x[0], self.mu * x[1] + (self.lam**2 - self.mu) * x[0] ** 2])

    def simulate(self, theta, n_states: int) -> np.ndarray:
        x = np.asarray(theta, dtype=float)
        if x.shape != (2,):
            raise InputError(f"koopman-quadratic needs a 2-d initial state, got shape {x.shape}")
        out = np.empty((2, n_states))
        out[:, 0] = x
        for t in range(1, n_states):
            out[:, t] = x = self.step(x)
        return out

    @property
    def params(self) -> dict:
        return {"lam": self.lam, "mu": self.mu}

    def default_hypercube(self):
        return [(-1.0, 1.0), (-1.0, 1.0)]


def _lorenz_rhs(s, sigma, rho, beta):
    x, y, z = s
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


@dataclass(frozen=True)
class EmbeddedLorenz:
    """Lorenz-63 integrated with classical RK4 and lifted to ``R^p``.

    Each 3-state ``s`` is embedded as ``tanh(W s + b)`` with ``W`` and ``b``
    drawn once from ``embed_seed``. ``embedding="identity"`` returns the raw
    states (requires ``p = 3``). ``substeps`` RK4 steps of size ``dt``
    separate consecutive snapshots.
    """

    p: int = 64
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    substeps: int = 1
    embed_seed: int = 0
    embed_scale: float = 0.1
    embedding: str = "tanh"
    system_id = "lorenz-embedded"
    seed_dim = 3

    def __post_init__(self):
        if self.p < 3:
            raise InputError(f"embedding dimension p must be >= 3, got {self.p}")
        if not self.dt > 0 or self.substeps < 1:
            raise InputError("dt must be positive and substeps >= 1")
        if self.embedding not in ("tanh", "identity"):
            raise InputError(f"embedding must be 'tanh' or 'identity', got {self.embedding!r}")
        if self.embedding == "identity" and self.p != 3:
            raise InputError("identity embedding requires p = 3")

    def embedding_matrices(self):
        rng = np.random.default_rng(self.embed_seed)
        W = rng.normal(scale=self.embed_scale, size=(self.p, 3))
        b = rng.uniform(-0.5, 0.5, size=self.p)
        return W, b

    def integrate(self, theta3, n_states: int) -> np.ndarray:
        s = np.asarray(theta3, dtype=float)
        if s.shape != (3,):
            raise InputError(f"Lorenz initial state must have 3 entries, got shape {s.shape}")
        args = (self.sigma, self.rho, self.beta)
        h = self.dt
        out = np.empty((3, n_states))
        out[:, 0] = s
        for t in range(1, n_states):
            for _ in range(self.substeps):
                k1 = _lorenz_rhs(s, *args)
                k2 = _lorenz_rhs(s + 0.5 * h * k1, *args)
                k3 = _lorenz_rhs(s + 0.5 * h * k2, *args)
                k4 = _lorenz_rhs(s + h * k3, *args)
                s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(s)):
                raise NumericError(f"Lorenz integration blew up at snapshot {t}")
            out[:, t] = s
        return out

    def embed(self, states3: np.ndarray) -> np.ndarray:
        if self.embedding == "identity":
            return states3.copy()
        W, b = self.embedding_matrices()
        return np.tanh(W @ states3 + b[:, None])

    def simulate(self, theta3, n_states: int) -> np.ndarray:
        return self.embed(self.integrate(theta3, n_states))

    @property
    def params(self) -> dict:
        return {
            "p": self.p, "sigma": self.sigma, "rho": self.rho, "beta": self.beta,
            "dt": self.dt, "substeps": self.substeps, "embed_seed": self.embed_seed,
            "embed_scale": self.embed_scale, "embedding": self.embedding,
        }

    def default_hypercube(self):
        return [(-15.0, 15.0), (-20.0, 20.0), (5.0, 45.0)]


SYSTEMS = {KoopmanQuadratic.system_id: KoopmanQuadratic, EmbeddedLorenz.system_id: EmbeddedLorenz}


def gen_koopman_quadratic(lam: float, mu: float, theta, t_prime: int) -> Trajectory:
    if t_prime < 2:
        raise InputError(f"T' must be >= 2, got {t_prime}")
    sys_ = KoopmanQuadratic(lam, mu)
    theta = np.asarray(theta, dtype=float)
    return Trajectory(sys_.simulate(theta, t_prime), sys_.system_id, sys_.params, theta)


def gen_lorenz_embedded(
    sigma: float,
    rho: float,
    beta: float,
    theta3,
    t_prime: int,
    p: int,
    dt: float,
    embed_seed: int,
    **options,
) -> Trajectory:
    if t_prime < 2:
        raise InputError(f"T' must be >= 2, got {t_prime}")
    sys_ = EmbeddedLorenz(p=p, sigma=sigma, rho=rho, beta=beta, dt=dt, embed_seed=embed_seed, **options)
    theta3 = np.asarray(theta3, dtype=float)
    return Trajectory(sys_.simulate(theta3, t_prime), sys_.system_id, sys_.params, theta3)


# -- datasets ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    train: list[Trajectory]
    test: list[Trajectory]
    meta: dict

    @property
    def pairs(self) -> SnapshotPairs:
        return SnapshotPairs.from_trajectories([t.states for t in self.train])


def make_dataset(system, n: int, t_prime: int, hypercube=None, seed: int = 0) -> Dataset:
    """Sample ``n`` seeds uniformly on ``hypercube`` and split each simulated
    trajectory of ``2 T' - 1`` states into a training part and its prolongation."""
    if n < 1:
        raise InputError(f"N must be >= 1, got {n}")
    if t_prime < 2:
        raise InputError(f"T' must be >= 2, got {t_prime}")
    cube = np.asarray(hypercube if hypercube is not None else system.default_hypercube(), dtype=float)
    if cube.shape != (system.seed_dim, 2) or np.any(cube[:, 0] > cube[:, 1]):
        raise InputError(f"hypercube must be {system.seed_dim} (lo, hi) pairs with lo <= hi")
    rng = np.random.default_rng(seed)
    seeds = cube[:, 0] + (cube[:, 1] - cube[:, 0]) * rng.random((n, system.seed_dim))
    train, test = [], []
    for theta0 in seeds:
        states = system.simulate(theta0, 2 * t_prime - 1)
        params = dict(system.params)
        train.append(Trajectory(states[:, :t_prime], system.system_id, params, theta0))
        test.append(Trajectory(states[:, t_prime - 1 :], system.system_id, params, theta0))
    meta = {
        "system_id": system.system_id,
        "params": system.params,
        "seeds": {"sample_seed": seed},
        "N": n,
        "T_prime": t_prime,
        "hypercube": cube.tolist(),
        "initial_conditions": seeds.tolist(),
    }
    return Dataset(train, test, meta)


def system_from_meta(meta: dict):
    try:
        cls = SYSTEMS[meta["system_id"]]
    except KeyError:
        raise InputError(f"unknown system {meta.get('system_id')!r}") from None
    return cls(**meta["params"])


def _write_states(path: Path, states: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(states.shape[0])])
        for row in states.T:
            w.writerow([repr(float(v)) for v in row])


def _read_states(path: Path) -> np.ndarray:
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).T
    except (OSError, ValueError) as exc:
        raise ModelIOError(f"cannot read trajectory file {path}: {exc}") from None


def save_dataset(ds: Dataset, out_dir) -> list[Path]:
    """Write ``train_###.csv``/``test_###.csv`` (rows = time) and ``dataset.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for split, trajs in (("train", ds.train), ("test", ds.test)):
        for i, t in enumerate(trajs):
            path = out / f"{split}_{i:03d}.csv"
            _write_states(path, t.states)
            written.append(path)
    side = out / "dataset.json"
    side.write_text(json.dumps(ds.meta, indent=2, sort_keys=True) + "\n")
    written.append(side)
    return written


def load_dataset(path) -> Dataset:
    root = Path(path)
    try:
        meta = json.loads((root / "dataset.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"cannot read dataset sidecar in {root}: {exc}") from None
    n = int(meta["N"])
    seeds = np.asarray(meta.get("initial_conditions", [None] * n), dtype=object)
    train, test = [], []
    for i in range(n):
        theta0 = None if seeds[i] is None else np.asarray(seeds[i], dtype=float)
        train.append(Trajectory(_read_states(root / f"train_{i:03d}.csv"), meta["system_id"], meta["params"], theta0))
        test.append(Trajectory(_read_states(root / f"test_{i:03d}.csv"), meta["system_id"], meta["params"], theta0))
    return Dataset(train, test, meta)


# -- metric --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ErrorDetail:
    trajectory_index: int
    t: int
    rel_err: float
    error: np.ndarray


def reconstruction_error(predictor: Callable[[np.ndarray], np.ndarray], test_trajectories):
    """Teacher-forced one-step error over all test trajectories.

    ``t`` in the returned details is 1-based: the prediction from ``x_t``
    compared against ``x_{t+1}``.
    """
    details: list[ErrorDetail] = []
    total = 0.0
    for j, traj in enumerate(test_trajectories):
        states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
        for t in range(states.shape[1] - 1):
            target = states[:, t + 1]
            den = np.linalg.norm(target)
            if den < EPS_DEN:
                raise MetricError(
                    f"reference state norm {den:.3e} below {EPS_DEN:g} at trajectory {j}, t={t + 1}"
                )
            err = np.asarray(predictor(states[:, t]), dtype=float) - target
            rel = float(np.linalg.norm(err) / den)
            total += rel**2
            details.append(ErrorDetail(j, t + 1, rel, err))
    return float(np.sqrt(total)), details


# -- sweeps --------------------------------------------------------------------


@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)
    per_trajectory: list[dict] = field(default_factory=list)
    error_maps: list[dict] = field(default_factory=list)

    def eps_from_details(self, method: str, kernel: str, k: int) -> float:
        rel = [
            r["rel_err"]
            for r in self.per_trajectory
            if (r["method"], r["kernel"], r["k"]) == (method, kernel, k)
        ]
        return float(np.sqrt(np.sum(np.square(rel))))

    def eps_table(self) -> dict:
        return {(r["method"], r["kernel"], r["k"]): r["eps_rec"] for r in self.rows}


def _one_step_predictor(method: str, data: SnapshotPairs, kernel: Kernel, k: int, cfg: PreimageConfig):
    if method == "gkdmd":
        model = fit(data, kernel, k)
        return lambda x: predict(model, x, 2, cfg)
    if method == "kdmd":
        model = kdmd_fit(data, kernel, k)
        return lambda x: kdmd_predict(model, x, 2)
    raise InputError(f"unknown method {method!r}; expected one of {METHODS}")


def _run_cell(method, kernel, k, data, test, cfg):
    t0 = time.perf_counter()
    try:
        predictor = _one_step_predictor(method, data, kernel, k, cfg)
        t1 = time.perf_counter()
        eps, details = reconstruction_error(predictor, test)
        t2 = time.perf_counter()
    except GKDMDError as exc:
        log.warning("cell %s/%s/k=%d failed: %s", method, kernel.label(), k, exc)
        return {"error": f"{type(exc).__name__}: {exc}"}, []
    return {"eps_rec": eps, "fit_seconds": t1 - t0, "predict_seconds": t2 - t1}, details


def compare(
    dataset: Dataset,
    methods: Sequence[str],
    kernels: Sequence[Kernel],
    k_list: Sequence[int],
    cfg: PreimageConfig = PreimageConfig(),
    jobs: int = 1,
) -> BenchReport:
    """Full factorial sweep over ``methods x kernels x k_list``.

    A failing cell is recorded with ``eps_rec = nan`` and an ``error``
    message; the sweep continues. Rows follow the grid order regardless of
    ``jobs``.
    """
    if not methods or not kernels or not k_list:
        raise InputError("methods, kernels and k_list must all be non-empty")
    for mth in methods:
        if mth not in METHODS:
            raise InputError(f"unknown method {mth!r}; expected one of {METHODS}")
    data = dataset.pairs
    bad_k = [k for k in k_list if not 1 <= int(k) <= data.m]
    if bad_k:
        raise InputError(f"ranks {bad_k} outside [1, m={data.m}]")
    grid = [(mth, ker, int(k)) for mth in methods for ker in kernels for k in k_list]

    def run(cell):
        return _run_cell(*cell, data, dataset.test, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, grid))
    else:
        results = [run(c) for c in grid]

    report = BenchReport()
    for (mth, ker, k), (summary, details) in zip(grid, results):
        label = ker.label()
        row = {"method": mth, "kernel": label, "k": k, "eps_rec": float("nan"),
               "fit_seconds": float("nan"), "predict_seconds": float("nan")}
        row.update(summary)
        report.rows.append(row)
        for d in details:
            report.per_trajectory.append(
                {"method": mth, "kernel": label, "k": k,
                 "trajectory_index": d.trajectory_index, "t": d.t, "rel_err": d.rel_err}
            )
            report.error_maps.append(
                {"method": mth, "kernel": label, "k": k,
                 "trajectory_index": d.trajectory_index, "t": d.t, "error": d.error}
            )
    return report


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(report: BenchReport, path, timings: bool = True) -> None:
    """Columns ``method,kernel,k,eps_rec,fit_seconds,predict_seconds``.

    With ``timings=False`` the two timing columns are left empty so the file
    depends only on the inputs.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            vals = [r[c] for c in REPORT_COLUMNS]
            if not timings:
                vals[4] = vals[5] = ""
            w.writerow([_fmt(v) for v in vals])


def write_per_trajectory_csv(report: BenchReport, path) -> None:
    cols = ("method", "kernel", "k", "trajectory_index", "t", "rel_err")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report.per_trajectory:
            w.writerow([_fmt(r[c]) for c in cols])


def write_error_maps_csv(report: BenchReport, path) -> None:
    """Signed one-step errors ``x2(x_t) - x_{t+1}``, one row per prediction."""
    if not report.error_maps:
        Path(path).write_text("method,kernel,k,trajectory_index,t\n")
        return
    p = report.error_maps[0]["error"].size
    cols = ["method", "kernel", "k", "trajectory_index", "t"] + [f"e{i}" for i in range(p)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in report.error_maps:
            w.writerow([_fmt(r[c]) for c in cols[:5]] + [repr(float(v)) for v in r["error"]])
