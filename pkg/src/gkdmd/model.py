r"""Offline training of the generalized kernel DMD reduced model.

Notation. The snapshot operators :math:`A, B : \mathbb{R}^m \to \mathcal{H}`
send a weight vector to the weighted sum of lifted snapshots,
:math:`A w = \sum_j \Psi(x_j) w_j` and :math:`B w = \sum_j \Psi(y_j) w_j`.
They are never formed; only their Gram matrices are::

    G_AA = A^* A = gram(X, X)     G_BB = B^* B = gram(Y, Y)
    G_BA = B^* A = gram(Y, X)     A^* B = G_BA^T

With the eigendecomposition ``G_AA = V_A Sigma_A^2 V_A^T`` the singular
factor ``R = Sigma_A^+ V_A^T`` gives ``U_A = A R^T`` and ``A^+ = R^T R A^*``.

Gram form of ``Z = B P_{A*}``. ``P_{A*}`` projects onto ``range(A^*)``,
which equals ``range(A^* A)``. With ``V_r`` the eigenvectors of ``G_AA``
having nonzero eigenvalues, ``P_{A*} = V_r V_r^T`` and therefore::

    Z^* Z = P_{A*} B^* B P_{A*} = P G_BB P.

The eigenvectors of ``Z^* Z`` give ``S_k`` and the rank-``k`` projector
``P_k P_k^* = B S_k^T S_k B^*``, so the optimal rank-``k`` operator is
``A_k = B S_k^T S_k G_BB R^T R A^*``. Its right eigenvectors are
``B S_k^T zeta`` and its left eigenvectors are ``A R^T xi`` where ``zeta`` and
``xi`` are eigenvectors of the two ``m x m`` matrices built by
:func:`paired_eig_matrices`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, ModelError, ModelIOError
from .kernels import Kernel, kernel_from_dict
from .spectral import (
    DEFAULT_TOL_REL,
    EigenSystem,
    SymEig,
    nonsym_eig,
    normalize_vectors,
    pair_eigensystems,
    sort_eigenpairs,
    sym_eig,
    truncated_pinv_factor,
)

__all__ = [
    "MODEL_VERSION",
    "SnapshotPairs",
    "GramSet",
    "ReducedModel",
    "build_grams",
    "project_gram_Z",
    "paired_eig_matrices",
    "fit",
    "save",
    "load",
]

MODEL_VERSION = 1
EIG_ROUTES = ("compressed", "paired")
TOL_MATCH = 1e-6
# eigenvalues below this modulus (relative to max(1, |lambda|_max)) carry no
# dynamics for horizons T >= 2 and are dropped from the model
ZERO_EIG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SnapshotPairs:
    """Columns of ``X`` are states ``x_t`` and columns of ``Y`` their successors.

    Column ``(T'-1)*i + j`` belongs to trajectory ``i`` and time ``j``.
    """

    X: np.ndarray
    Y: np.ndarray
    n_traj: int = 1
    t_prime: int = 2

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != Y.shape:
            raise InputError(f"X and Y must have the same shape, got {X.shape} and {Y.shape}")
        if X.shape[1] != self.n_traj * (self.t_prime - 1):
            raise InputError(
                f"{X.shape[1]} columns inconsistent with N={self.n_traj}, T'={self.t_prime}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("snapshot matrices contain non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[np.ndarray]) -> "SnapshotPairs":
        """Build pairs from ``p x T'`` state arrays of equal length."""
        trajs = [np.asarray(t, dtype=float) for t in trajectories]
        if not trajs:
            raise InputError("at least one trajectory is required")
        shapes = {t.shape for t in trajs}
        if len(shapes) != 1:
            raise InputError(f"trajectories must share one shape, got {sorted(shapes)}")
        p, t_prime = trajs[0].shape
        if t_prime < 2:
            raise InputError(f"trajectories need at least 2 states, got {t_prime}")
        X = np.hstack([t[:, :-1] for t in trajs])
        Y = np.hstack([t[:, 1:] for t in trajs])
        return cls(X, Y, len(trajs), t_prime)

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class GramSet:
    G_AA: np.ndarray
    G_BB: np.ndarray
    G_BA: np.ndarray


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Fitted reduced model. Immutable; safe to share between threads."""

    kernel: Kernel
    k: int
    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    S_k: np.ndarray
    E: np.ndarray
    eig: EigenSystem
    rank_A: int
    rank_Z: int
    tol_rel: float = DEFAULT_TOL_REL

    def __post_init__(self):
        self.validate()

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def lambdas(self) -> np.ndarray:
        return self.eig.lambdas

    @cached_property
    def eigfun_weights(self) -> np.ndarray:
        """``W`` with ``phi(theta) = W^T gram(X, theta)``, i.e. ``W = R^T conj(xi)``."""
        return self.R.T @ self.eig.xi.conj()

    @cached_property
    def amplitude_basis(self) -> np.ndarray:
        """``S_k^T [zeta_1 ... zeta_k]``; amplitudes are this times ``lambda^(T-1) phi``."""
        return self.S_k.T @ self.eig.zeta

    def validate(self) -> None:
        m, p = self.m, self.p
        if self.Y.shape != (p, m):
            raise ModelError(f"Y has shape {self.Y.shape}, expected {(p, m)}")
        for name in ("R", "S_k", "E"):
            if getattr(self, name).shape != (m, m):
                raise ModelError(f"{name} has shape {getattr(self, name).shape}, expected {(m, m)}")
        if not 0 <= self.k <= m:
            raise ModelError(f"k={self.k} outside [0, m={m}]")
        if not self.k <= self.rank_Z <= self.rank_A <= m:
            raise ModelError(
                f"rank ordering violated: k={self.k}, rank_Z={self.rank_Z}, "
                f"rank_A={self.rank_A}, m={m}"
            )
        e = self.eig
        if e.lambdas.shape != (self.k,) or e.xi.shape != (m, self.k) or e.zeta.shape != (m, self.k):
            raise ModelError("eigen-system shapes inconsistent with k and m")

    def biorthogonality(self) -> np.ndarray:
        """Matrix ``zeta_i^* E xi_j``; the identity for a valid model."""
        return self.eig.zeta.conj().T @ self.E @ self.eig.xi

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        def cplx(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "version": MODEL_VERSION,
            "kernel": self.kernel.to_dict(),
            "k": self.k,
            "tol_rel": self.tol_rel,
            "rank_A": self.rank_A,
            "rank_Z": self.rank_Z,
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "R": self.R.tolist(),
            "S_k": self.S_k.tolist(),
            "E": self.E.tolist(),
            "lambdas": cplx(self.eig.lambdas),
            "xi": cplx(self.eig.xi),
            "zeta": cplx(self.eig.zeta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReducedModel":
        expected = {
            "version", "kernel", "k", "tol_rel", "rank_A", "rank_Z",
            "X", "Y", "R", "S_k", "E", "lambdas", "xi", "zeta",
        }
        if not isinstance(d, dict):
            raise ModelIOError("model file must contain a JSON object")
        missing, extra = expected - d.keys(), d.keys() - expected
        if missing or extra:
            raise ModelIOError(f"model fields invalid: missing={sorted(missing)}, unknown={sorted(extra)}")
        if d["version"] != MODEL_VERSION:
            raise ModelIOError(f"model version {d['version']!r} unsupported (expected {MODEL_VERSION})")
        try:
            k = int(d["k"])
            X = np.array(d["X"], dtype=float)
            if X.ndim != 2:
                raise ValueError(f"X must be a matrix, got {X.ndim} dimensions")
            if not 0 <= k <= X.shape[1]:
                raise ModelError(f"k={k} outside [0, m={X.shape[1]}]")

            def real(name, shape):
                return np.array(d[name], dtype=float).reshape(shape)

            def cplx(name, shape):
                a = np.array(d[name], dtype=float).reshape(shape + (2,))
                out = np.empty(shape, dtype=complex)
                out.real, out.imag = a[..., 0], a[..., 1]
                return out

            p, m = X.shape
            eig = EigenSystem(cplx("lambdas", (k,)), cplx("xi", (m, k)), cplx("zeta", (m, k)))
            return cls(
                kernel=kernel_from_dict(d["kernel"]),
                k=k,
                X=X,
                Y=real("Y", (p, m)),
                R=real("R", (m, m)),
                S_k=real("S_k", (m, m)),
                E=real("E", (m, m)),
                eig=eig,
                rank_A=int(d["rank_A"]),
                rank_Z=int(d["rank_Z"]),
                tol_rel=float(d["tol_rel"]),
            )
        except ModelError as exc:
            raise ModelIOError(f"model failed validation: {exc}") from None
        except (ValueError, TypeError, IndexError, InputError) as exc:
            raise ModelIOError(f"malformed model file: {exc}") from None


def build_grams(data: SnapshotPairs, kernel: Kernel) -> GramSet:
    return GramSet(
        G_AA=kernel.gram(data.X),
        G_BB=kernel.gram(data.Y),
        G_BA=kernel.gram(data.Y, data.X),
    )


def project_gram_Z(grams: GramSet, eigA: SymEig) -> np.ndarray:
    """Gram matrix ``Z^* Z = P G_BB P`` of ``Z = B P_{A*}``, see module docs."""
    Vr = eigA.vectors[:, : eigA.numerical_rank]
    P = Vr @ Vr.T
    ZZ = P @ grams.G_BB @ P
    return 0.5 * (ZZ + ZZ.T)


def paired_eig_matrices(grams: GramSet, R: np.ndarray, S_k: np.ndarray):
    """The two ``m x m`` matrices whose spectra carry the nonzero eigenvalues.

    Returns ``(M_left, M_right)`` where ``M_left`` has the left factors
    ``xi`` (for eigenvalue ``conj(lambda)``) and ``M_right`` the right factors
    ``zeta`` as eigenvectors::

        M_left  = R G_BB S_k^T S_k G_BA R^T
        M_right = S_k G_BB R^T R G_BA^T S_k^T
    """
    G_BB, G_BA = grams.G_BB, grams.G_BA
    SS = S_k.T @ S_k
    RR = R.T @ R
    M_left = R @ G_BB @ SS @ G_BA @ R.T
    M_right = S_k @ G_BB @ RR @ G_BA.T @ S_k.T
    return M_left, M_right


def _eigen_clusters(lambdas: np.ndarray, tol: float):
    clusters: list[list[int]] = []
    for i, lam in enumerate(lambdas):
        for c in clusters:
            ref = lambdas[c[0]]
            if abs(lam - ref) <= tol * max(1.0, abs(ref)):
                c.append(i)
                break
        else:
            clusters.append([i])
    return clusters


def _biorthonormalize(eig: EigenSystem, E: np.ndarray, tol_match: float) -> EigenSystem:
    """Rescale the right factors so that ``zeta^* E xi = I``.

    A lone eigenvalue divides ``zeta_i`` by ``conj(zeta_i^* E xi_i)``; a
    cluster of (numerically) repeated eigenvalues is handled blockwise, which
    also removes the arbitrary basis choice inside the shared eigenspace.
    """
    zeta = eig.zeta.copy()
    scale = np.linalg.norm(E)
    for idx in _eigen_clusters(eig.lambdas, tol_match):
        C = zeta[:, idx].conj().T @ E @ eig.xi[:, idx]
        smin = np.linalg.svd(C, compute_uv=False).min()
        if not smin >= 1e-12 * scale:
            raise ModelError(
                "non-biorthogonal eigenpair for eigenvalue "
                f"{eig.lambdas[idx[0]]:.6g} (|zeta^* E xi| = {smin:.3e}); "
                "the low-rank operator is close to defective"
            )
        zeta[:, idx] = zeta[:, idx] @ np.linalg.inv(C).conj().T
    return EigenSystem(eig.lambdas, eig.xi, zeta)


def _compressed_eigensystem(grams: GramSet, R: np.ndarray, eigZ: SymEig, k: int) -> EigenSystem:
    # S_k = J Sigma_k^-1 V_k^T with J = [I_k; 0], so with K = V_k^T R^T R G_BA^T V_k:
    #   M_right = J Sigma_k K Sigma_k^-1 J^T   and   M_left = R V_k K^T V_k^T R^T.
    # Hence zeta = J Sigma_k u for K u = lambda u, and xi = R V_k w for w^* K = lambda w^*.
    m = R.shape[0]
    Vk = eigZ.vectors[:, :k]
    sk = np.sqrt(eigZ.values[:k])
    K = Vk.T @ (R.T @ (R @ (grams.G_BA.T @ Vk)))
    lam, U = sort_eigenpairs(*np.linalg.eig(K))
    if np.linalg.cond(U) > 1e12:
        raise ModelError(
            "non-biorthogonal eigenpairs: the low-rank operator is close to defective "
            f"(eigenvector condition number {np.linalg.cond(U):.3e})"
        )
    W = np.linalg.inv(U).conj().T
    zeta = np.zeros((m, k), dtype=complex)
    zeta[:k] = sk[:, None] * U
    zeta = normalize_vectors(zeta)
    xi = normalize_vectors(R @ (Vk @ W))
    return EigenSystem(lam, xi, zeta)


def fit(
    data: SnapshotPairs,
    kernel: Kernel,
    k: int,
    tol_rel: float = DEFAULT_TOL_REL,
    tol_match: float = TOL_MATCH,
    eig_route: str = "compressed",
) -> ReducedModel:
    """Fit the rank-``k`` kernel DMD model from snapshot pairs.

    Only ``m x m`` kernel matrices are formed. The effective rank is
    ``min(k, rank(Z))``; eigenvalues that vanish numerically are dropped
    since they do not contribute to any prediction.

    ``eig_route`` selects how the eigen-triples are extracted:

    ``"compressed"`` (default)
        one ``k x k`` eigenproblem ``V_k^T G_AA^+ G_BA^T V_k``, with ``V_k``
        the leading eigenvectors of ``Z^* Z``. Its spectrum equals the nonzero
        spectrum of both :func:`paired_eig_matrices` outputs, and it avoids the
        extra ``G_BB`` and ``1/sigma_Z`` factors that square the conditioning.
    ``"paired"``
        eigendecompose ``M_left`` and ``M_right`` separately and pair them.
    """
    if eig_route not in EIG_ROUTES:
        raise InputError(f"eig_route must be one of {EIG_ROUTES}, got {eig_route!r}")
    m = data.m
    if int(k) != k or not 1 <= k <= m:
        raise InputError(f"k must be an integer with 1 <= k <= m={m}, got {k}")
    grams = build_grams(data, kernel)
    eigA = sym_eig(grams.G_AA, tol_rel)
    R = truncated_pinv_factor(eigA, m)
    eigZ = sym_eig(project_gram_Z(grams, eigA), tol_rel)
    rank_A = eigA.numerical_rank
    rank_Z = min(eigZ.numerical_rank, rank_A)
    k_eff = min(int(k), rank_Z)

    if k_eff == 0:
        S_k = np.zeros((m, m))
        empty = np.zeros((m, 0), dtype=complex)
        eig = EigenSystem(np.zeros(0, dtype=complex), empty, empty.copy())
        E = S_k @ grams.G_BA @ R.T
        return ReducedModel(kernel, 0, data.X, data.Y, R, S_k, E, eig, rank_A, rank_Z, tol_rel)

    S_k = truncated_pinv_factor(eigZ, k_eff)
    if eig_route == "compressed":
        eig = _compressed_eigensystem(grams, R, eigZ, k_eff)
    else:
        M_left, M_right = paired_eig_matrices(grams, R, S_k)
        rvals, rvecs = nonsym_eig(M_right, k_eff)
        lvals, lvecs = nonsym_eig(M_left, k_eff)
        # M_left acts on left factors through the adjoint, hence conj(lambda)
        eig = pair_eigensystems((lvals.conj(), lvecs), (rvals, rvecs), tol_match)

    keep = np.abs(eig.lambdas) > ZERO_EIG_TOL * max(1.0, np.abs(eig.lambdas).max())
    eig = EigenSystem(eig.lambdas[keep], eig.xi[:, keep], eig.zeta[:, keep])

    E = S_k @ grams.G_BA @ R.T
    eig = _biorthonormalize(eig, E, tol_match)
    return ReducedModel(
        kernel, int(keep.sum()), data.X, data.Y, R, S_k, E, eig, rank_A, rank_Z, tol_rel
    )


def save(model: ReducedModel, path) -> None:
    text = json.dumps(model.to_dict(), separators=(",", ":"))
    Path(path).write_text(text + "\n")


def load(path) -> ReducedModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelIOError(f"cannot read model file {path}: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelIOError(f"model file {path} is not valid JSON: {exc}") from None
    return ReducedModel.from_dict(d)
