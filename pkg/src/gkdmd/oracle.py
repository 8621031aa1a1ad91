r"""Reference implementations used to check the kernel-only algorithm.

* :class:`FeatureMap` gives an explicit finite feature map for the
  polynomial and linear kernels, so the optimal low-rank operator
  ``A_k = P_{Z^k} B A^+`` can be formed directly in feature space
  (:func:`edmd_exact`).
* :func:`exact_dmd_matrix` is the plain least-squares DMD matrix ``Y X^+``.
* :func:`kdmd_fit` / :func:`kdmd_predict` implement the classic kernel DMD
  baseline (Williams, Rowley & Kevrekidis, 2015), which ignores the rank
  constraint and reconstructs states through a linear inverse.

The Gaussian kernel has no finite feature map and is only covered by the
baseline.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .kernels import Kernel, LinearKernel, PolynomialKernel
from .model import SnapshotPairs
from .predict import complex_power
from .spectral import DEFAULT_TOL_REL, nonsym_eig, sort_eigenpairs, sym_eig

__all__ = [
    "FeatureMap",
    "EdmdResult",
    "KdmdModel",
    "edmd_exact",
    "exact_dmd_matrix",
    "kdmd_fit",
    "kdmd_predict",
]

MAX_FEATURES = 2000


@dataclass(frozen=True)
class FeatureMap:
    """Explicit feature map ``Phi`` with ``<Phi(y), Phi(z)> = h(y, z)``.

    Polynomial features are the monomials of total degree ``<= degree``,
    ordered by degree and then lexicographically (for degree 2: the
    constant, ``z_1..z_p``, then ``z_i z_j`` with ``i <= j``). Each monomial
    ``z^a`` carries the weight ``sqrt(multinomial(d; a_0, a) * c^a_0)`` where
    ``a_0 = d - |a|``.
    """

    kind: str
    p: int
    degree: int = 1
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "linear"):
            raise InputError(f"no explicit feature map for kind {self.kind!r}")
        if self.p < 1:
            raise InputError(f"p must be >= 1, got {self.p}")

    @classmethod
    def for_kernel(cls, kernel: Kernel, p: int) -> "FeatureMap":
        if isinstance(kernel, PolynomialKernel):
            return cls("polynomial", p, kernel.degree, kernel.offset)
        if isinstance(kernel, LinearKernel):
            return cls("linear", p)
        raise InputError(f"{kernel.family} kernel has no finite feature map")

    @property
    def D(self) -> int:
        if self.kind == "linear":
            return self.p
        return math.comb(self.p + self.degree, self.degree)

    def _terms(self):
        for deg in range(self.degree + 1):
            for idx in itertools.combinations_with_replacement(range(self.p), deg):
                counts = [idx.count(i) for i in set(idx)]
                coef = math.factorial(self.degree) / (
                    math.factorial(self.degree - deg) * math.prod(map(math.factorial, counts))
                )
                yield idx, math.sqrt(coef * self.offset ** (self.degree - deg))

    def apply(self, Z) -> np.ndarray:
        """Features of a vector (returns ``D``) or of the columns of a matrix (``D x n``)."""
        Z = np.asarray(Z, dtype=float)
        vec = Z.ndim == 1
        Z = Z[:, None] if vec else Z
        if Z.shape[0] != self.p:
            raise InputError(f"dimension mismatch: feature map expects p={self.p}, got {Z.shape[0]}")
        if self.kind == "linear":
            F = Z.copy()
        else:
            F = np.array(
                [w * np.prod(Z[list(idx)], axis=0) for idx, w in self._terms()]
            )
        return F[:, 0] if vec else F


@dataclass(frozen=True, eq=False)
class EdmdResult:
    eigvals: np.ndarray
    residuals: np.ndarray
    operator: np.ndarray
    rank_Z: int


def _pinv_rank(M: np.ndarray, tol_rel: float):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    # same threshold as the Gram-eigenvalue policy: s_i^2 > tol_rel * s_1^2
    r = int(np.count_nonzero(s > np.sqrt(tol_rel) * s[0])) if s.size and s[0] > 0 else 0
    return U, s, Vt, r


def edmd_exact(
    data: SnapshotPairs, fm: FeatureMap, k: int, tol_rel: float = DEFAULT_TOL_REL
) -> EdmdResult:
    """Optimal rank-``k`` operator formed explicitly in feature space.

    Returns the nonzero eigenvalues of ``A_k`` (ordered by decreasing modulus)
    and the residuals ``||B - A_j A||_F`` for ``j = 1..k``.
    """
    if fm.D > MAX_FEATURES:
        raise InputError(f"feature dimension {fm.D} too large for dense algebra")
    if not 1 <= k <= data.m:
        raise InputError(f"k must satisfy 1 <= k <= m={data.m}, got {k}")
    A = fm.apply(data.X)
    B = fm.apply(data.Y)
    Ua, sa, Vta, ra = _pinv_rank(A, tol_rel)
    A_pinv = Vta[:ra].T @ np.diag(1.0 / sa[:ra]) @ Ua[:, :ra].T
    Z = B @ (A_pinv @ A)
    Uz, sz, _, rz = _pinv_rank(Z, tol_rel)
    BA = B @ A_pinv
    residuals = []
    for j in range(1, k + 1):
        Uj = Uz[:, : min(j, rz)]
        residuals.append(np.linalg.norm(B - Uj @ (Uj.T @ BA) @ A))
    Uk = Uz[:, : min(k, rz)]
    A_k = Uk @ (Uk.T @ BA)
    # nonzero spectrum of A_k equals that of its compression to range(U_k)
    vals = np.linalg.eigvals(Uk.T @ BA @ Uk) if Uk.shape[1] else np.zeros(0)
    vals, _ = sort_eigenpairs(vals, np.eye(vals.size))
    keep = np.abs(vals) > 1e-12 * max(1.0, np.abs(vals).max(initial=0.0))
    return EdmdResult(vals[keep], np.array(residuals), A_k, rz)


def exact_dmd_matrix(X, Y, tol_rel: float = DEFAULT_TOL_REL) -> np.ndarray:
    """Least-squares DMD matrix ``Y X^+``."""
    X = np.asarray(X, dtype=float)
    U, s, Vt, r = _pinv_rank(X, tol_rel)
    return np.asarray(Y, dtype=float) @ (Vt[:r].T @ np.diag(1.0 / s[:r]) @ U[:, :r].T)


@dataclass(frozen=True, eq=False)
class KdmdModel:
    kernel: Kernel
    k: int
    eigvals: np.ndarray
    eigfun_coeffs: np.ndarray
    modes: np.ndarray
    X: np.ndarray

    def eigenfunctions(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.X.shape[0],):
            raise InputError(f"theta must have dimension p={self.X.shape[0]}, got {theta.shape}")
        return self.kernel.gram(self.X, theta[:, None])[:, 0] @ self.eigfun_coeffs


def kdmd_fit(
    data: SnapshotPairs, kernel: Kernel, k: int, tol_rel: float = DEFAULT_TOL_REL
) -> KdmdModel:
    """Classic kernel DMD: eigenpairs of ``Sigma^+ Q^T G_BA Q Sigma^+``.

    ``G_AA = Q Sigma^2 Q^T`` is truncated to its numerical rank. Modes come
    from the least-squares fit of the states to the eigenfunction values at
    the snapshots (the linear-inverse assumption of this method).
    """
    if not 1 <= k <= data.m:
        raise InputError(f"k must satisfy 1 <= k <= m={data.m}, got {k}")
    eig = sym_eig(kernel.gram(data.X), tol_rel)
    r = eig.numerical_rank
    if r < data.m:
        warnings.warn(
            f"kernel DMD: Gram matrix has rank {r} < m={data.m}; truncating (full rank assumed)",
            RuntimeWarning,
            stacklevel=2,
        )
    Q = eig.vectors[:, :r]
    sig = np.sqrt(eig.values[:r])
    G_BA = kernel.gram(data.Y, data.X)
    K_hat = (Q / sig).T @ G_BA @ (Q / sig)
    kk = min(k, r)
    lam, V = nonsym_eig(K_hat, kk)
    coeffs = (Q / sig) @ V
    phi_x = (Q * sig) @ V
    modes_T = np.linalg.pinv(phi_x, rcond=np.sqrt(tol_rel)) @ data.X.T
    return KdmdModel(kernel, kk, lam, coeffs, modes_T.T, data.X)


def kdmd_predict(model: KdmdModel, theta, T: int) -> np.ndarray:
    """``Re(sum_j lambda_j^(T-1) phi_j(theta) m_j)``."""
    if int(T) != T or T < 2:
        raise InputError(f"horizon T must be an integer >= 2, got {T}")
    phi = model.eigenfunctions(theta)
    return np.real(model.modes @ (complex_power(model.eigvals, int(T) - 1) * phi))
