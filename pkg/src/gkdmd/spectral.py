"""Dense eigen-solvers and truncation policies used by training and oracles.

Conventions fixed here so that fitted models are reproducible:

* symmetric spectra are returned in descending order, small negative
  round-off eigenvalues are clamped to zero;
* nonsymmetric eigenpairs are ordered by decreasing modulus, ties broken by
  decreasing real part then decreasing imaginary part, so that conjugate
  pairs sit next to each other with the positive imaginary part first;
* eigenvectors have unit 2-norm and their largest-modulus entry is real
  positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key

import numpy as np

from .errors import InputError, ModelError, NumericError

__all__ = [
    "DEFAULT_TOL_REL",
    "SymEig",
    "EigenSystem",
    "sym_eig",
    "truncated_pinv_factor",
    "nonsym_eig",
    "sort_eigenpairs",
    "normalize_vectors",
    "pair_eigensystems",
]

DEFAULT_TOL_REL = 1e-10


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition ``S = V diag(values) V^T`` of a PSD matrix."""

    vectors: np.ndarray
    values: np.ndarray
    numerical_rank: int


@dataclass(frozen=True)
class EigenSystem:
    """Matched eigen-triples: ``lambdas[i]`` with left factor ``xi[:, i]``
    and right factor ``zeta[:, i]``."""

    lambdas: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray

    def __len__(self):
        return self.lambdas.size


def sym_eig(S, tol_rel: float = DEFAULT_TOL_REL) -> SymEig:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError(f"expected a square matrix, got shape {S.shape}")
    if not 0.0 < tol_rel < 1.0:
        raise InputError(f"tol_rel must lie in (0, 1), got {tol_rel}")
    if not np.all(np.isfinite(S)):
        raise NumericError("symmetric eigensolver received non-finite entries")
    norm = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > 1e-8 * norm:
        raise InputError("matrix is not symmetric to relative tolerance 1e-8")
    m = S.shape[0]
    if m == 0:
        return SymEig(np.zeros((0, 0)), np.zeros(0), 0)
    try:
        values, vectors = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver failed: {exc}") from None
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    top = max(values[0], 0.0)
    clamp = tol_rel * top
    if values[-1] < -clamp and values[-1] < -np.finfo(float).tiny:
        raise NumericError(
            f"matrix is not positive semidefinite: eigenvalue {values[-1]:.3e} "
            f"below -{tol_rel:g} x {top:.3e}"
        )
    values[values < 0] = 0.0
    rank = int(np.count_nonzero(values > clamp)) if top > 0 else 0
    return SymEig(vectors, values, rank)


def truncated_pinv_factor(eig: SymEig, k: int) -> np.ndarray:
    """Return ``diag(d) V^T`` with ``d_i = values[i]**-0.5`` for the leading
    ``min(k, rank)`` indices and zero elsewhere.

    For a Gram matrix ``M^* M`` this is ``Sigma_M^dagger V_M^*`` restricted to
    the ``k`` dominant singular directions of ``M``.
    """
    m = eig.values.size
    if not 1 <= k <= max(m, 1):
        raise InputError(f"k must satisfy 1 <= k <= {m}, got {k}")
    r = min(k, eig.numerical_rank)
    d = np.zeros(m)
    d[:r] = 1.0 / np.sqrt(eig.values[:r])
    return d[:, None] * eig.vectors.T


def _order_key(tol: float):
    def cmp(a: complex, b: complex) -> int:
        scale = max(abs(a), abs(b), 1.0)
        for x, y in ((abs(a), abs(b)), (a.real, b.real), (a.imag, b.imag)):
            if abs(x - y) > tol * scale:
                return -1 if x > y else 1
        return 0

    return cmp_to_key(cmp)


def sort_eigenpairs(values, vectors, tol: float = 1e-12):
    """Order eigenpairs by the package convention and normalize the vectors."""
    values = np.asarray(values, dtype=complex)
    vectors = np.asarray(vectors, dtype=complex)
    key = _order_key(tol)
    order = sorted(range(values.size), key=lambda i: key(values[i]))
    return values[order], normalize_vectors(vectors[:, order])


def normalize_vectors(vectors) -> np.ndarray:
    """Unit 2-norm columns whose largest-modulus entry is real positive."""
    vectors = np.array(vectors, dtype=complex)
    norms = np.linalg.norm(vectors, axis=0)
    norms[norms == 0] = 1.0
    vectors /= norms
    if vectors.size:
        lead = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
        phase = np.ones_like(lead)
        nz = np.abs(lead) > 0
        phase[nz] = np.abs(lead[nz]) / lead[nz]
        vectors *= phase
    return vectors


def nonsym_eig(M, k: int):
    """Top-``k`` eigenpairs of a real square matrix, ordered by decreasing modulus."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    if not 0 <= k <= M.shape[0]:
        raise InputError(f"k must satisfy 0 <= k <= {M.shape[0]}, got {k}")
    if not np.all(np.isfinite(M)):
        raise NumericError("nonsymmetric eigensolver received non-finite entries")
    try:
        values, vectors = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"nonsymmetric eigensolver failed: {exc}") from None
    values, vectors = sort_eigenpairs(values, vectors)
    return values[:k], vectors[:, :k]


def pair_eigensystems(left, right, tol_match: float = 1e-6) -> EigenSystem:
    """Match ``(lambda, xi)`` pairs against ``(lambda, zeta)`` pairs by eigenvalue.

    Greedy nearest-neighbour assignment in the complex plane, visiting the
    right eigenvalues in order. The result follows the order of ``right``.
    """
    lvals, lvecs = (np.asarray(a, dtype=complex) for a in left)
    rvals, rvecs = (np.asarray(a, dtype=complex) for a in right)
    if lvals.size != rvals.size:
        raise ModelError(
            "eigenvalue mismatch between left and right reduced matrices: "
            f"{lvals.size} left vs {rvals.size} right eigenvalues"
        )
    free = list(range(lvals.size))
    match = []
    for lam in rvals:
        dist = [abs(lvals[j] - lam) for j in free]
        j = free.pop(int(np.argmin(dist)))
        if abs(lvals[j] - lam) > tol_match * max(1.0, abs(lvals[j])):
            raise ModelError(
                "eigenvalue mismatch between left and right reduced matrices: "
                f"{lam:.6g} has nearest partner {lvals[j]:.6g}"
            )
        match.append(j)
    return EigenSystem(rvals.copy(), lvecs[:, match], rvecs.copy())
