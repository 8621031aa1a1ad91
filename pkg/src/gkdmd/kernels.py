r"""Positive definite kernels and Gram-matrix assembly.

Every inner product in the feature space is computed here through the kernel
trick, :math:`\langle \Psi(z), \Psi(y) \rangle = h(y, z)`. The feature map
itself is never materialized.

Three families are supported:

* Gaussian, :math:`h(y, z) = \exp(-\|y - z\|^2 / (2\sigma^2))`
* Polynomial, :math:`h(y, z) = (c + y^\top z)^d`
* Linear, :math:`h(y, z) = y^\top z`

The Gaussian normalization and the polynomial offset default ``c = 1`` are
conventions chosen here; the method only fixes "standard deviation" and
"quadratic" respectively. New families subclass :class:`Kernel` and
implement ``gram``, ``grad_z_sum``, ``self_eval`` and ``self_grad``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

__all__ = [
    "Kernel",
    "GaussianKernel",
    "PolynomialKernel",
    "LinearKernel",
    "kernel_from_dict",
    "parse_kernel",
]


def _as_vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InputError(f"{name} must be a non-empty 1-d vector, got shape {v.shape}")
    return v


def _as_columns(U, name: str) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2:
        raise InputError(f"{name} must be a 2-d array of column vectors, got shape {U.shape}")
    return U


class Kernel:
    """Base class. Subclasses are frozen dataclasses, hence hashable."""

    family: ClassVar[str] = ""

    # -- single evaluations -------------------------------------------------
    def eval(self, y, z) -> float:
        y, z = self._pair(y, z)
        return float(self.gram(y[:, None], z[:, None])[0, 0])

    def grad_z(self, y, z) -> np.ndarray:
        """Gradient of ``h(y, z)`` with respect to its second argument."""
        y, z = self._pair(y, z)
        return self.grad_z_sum(y[:, None], z, np.ones(1))

    @staticmethod
    def _pair(y, z):
        y = _as_vector(y, "y")
        z = _as_vector(z, "z")
        if y.shape != z.shape:
            raise InputError(f"dimension mismatch: y has {y.size} entries, z has {z.size}")
        return y, z

    # -- Gram assembly ------------------------------------------------------
    def gram(self, U, V=None) -> np.ndarray:
        """Matrix ``G[i, j] = h(u_i, v_j)`` over the columns of ``U`` and ``V``.

        When ``V`` is omitted (or is ``U``) the upper triangle is mirrored so
        the result is exactly symmetric.
        """
        U = _as_columns(U, "U")
        same = V is None or V is U
        V = U if same else _as_columns(V, "V")
        if U.shape[0] != V.shape[0]:
            raise InputError(
                f"row-dimension mismatch: U has {U.shape[0]} rows, V has {V.shape[0]}"
            )
        G = self._gram(U, V)
        if same:
            G = np.triu(G) + np.triu(G, 1).T
        return G

    def _gram(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_z_sum(self, Y, z, weights) -> np.ndarray:
        """Return ``sum_i weights[i] * grad_z h(y_i, z)`` for the columns ``y_i`` of ``Y``."""
        raise NotImplementedError

    def self_eval(self, z) -> float:
        """``h(z, z)``."""
        raise NotImplementedError

    def self_grad(self, z) -> np.ndarray:
        """Gradient of ``z -> h(z, z)``."""
        raise NotImplementedError

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        raise NotImplementedError

    def label(self) -> str:
        """Compact CLI form, e.g. ``gaussian:sigma=10``; inverse of :func:`parse_kernel`."""
        params = {k: v for k, v in self.to_dict().items() if k != "family"}
        if not params:
            return self.family
        body = ",".join(f"{k}={v:g}" for k, v in params.items())
        return f"{self.family}:{body}"


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    sigma: float = 1.0
    family: ClassVar[str] = "gaussian"

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InputError(f"Gaussian sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))

    def _gram(self, U, V):
        d2 = cdist(U.T, V.T, "sqeuclidean")
        return np.exp(-d2 / (2.0 * self.sigma**2))

    def grad_z_sum(self, Y, z, weights):
        Y = _as_columns(Y, "Y")
        z = np.asarray(z, dtype=float)
        kw = self._gram(Y, z[:, None])[:, 0] * np.asarray(weights, dtype=float)
        return (Y @ kw - z * kw.sum()) / self.sigma**2

    def self_eval(self, z):
        return 1.0

    def self_grad(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def to_dict(self):
        return {"family": self.family, "sigma": self.sigma}


@dataclass(frozen=True)
class PolynomialKernel(Kernel):
    degree: int = 2
    offset: float = 1.0
    family: ClassVar[str] = "polynomial"

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise InputError(f"polynomial degree must be an integer >= 1, got {self.degree}")
        if not np.isfinite(self.offset) or self.offset < 0:
            raise InputError(f"polynomial offset must be nonnegative, got {self.offset}")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "offset", float(self.offset))

    def _gram(self, U, V):
        return (self.offset + U.T @ V) ** self.degree

    def grad_z_sum(self, Y, z, weights):
        Y = _as_columns(Y, "Y")
        base = self.offset + Y.T @ np.asarray(z, dtype=float)
        coef = self.degree * base ** (self.degree - 1) * np.asarray(weights, dtype=float)
        return Y @ coef

    def self_eval(self, z):
        z = np.asarray(z, dtype=float)
        return float((self.offset + z @ z) ** self.degree)

    def self_grad(self, z):
        z = np.asarray(z, dtype=float)
        return 2.0 * self.degree * (self.offset + z @ z) ** (self.degree - 1) * z

    def to_dict(self):
        return {"family": self.family, "degree": self.degree, "offset": self.offset}


@dataclass(frozen=True)
class LinearKernel(Kernel):
    family: ClassVar[str] = "linear"

    def _gram(self, U, V):
        return U.T @ V

    def grad_z_sum(self, Y, z, weights):
        return _as_columns(Y, "Y") @ np.asarray(weights, dtype=float)

    def self_eval(self, z):
        z = np.asarray(z, dtype=float)
        return float(z @ z)

    def self_grad(self, z):
        return 2.0 * np.asarray(z, dtype=float)

    def to_dict(self):
        return {"family": self.family}


_FAMILIES = {cls.family: cls for cls in (GaussianKernel, PolynomialKernel, LinearKernel)}


def kernel_from_dict(d: dict) -> Kernel:
    """Inverse of :meth:`Kernel.to_dict`. Unknown keys are rejected."""
    if not isinstance(d, dict) or "family" not in d:
        raise InputError(f"kernel spec must be an object with a 'family' key, got {d!r}")
    params = dict(d)
    family = params.pop("family")
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise InputError(f"unknown kernel family {family!r}; expected one of {sorted(_FAMILIES)}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise InputError(f"invalid parameters for {family} kernel: {exc}") from None


def parse_kernel(text: str) -> Kernel:
    """Parse ``gaussian:sigma=10``, ``polynomial:degree=2,offset=1`` or ``linear``."""
    family, _, body = text.strip().partition(":")
    params: dict = {"family": family.strip().lower()}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise InputError(f"malformed kernel parameter {item!r} in {text!r}")
        try:
            params[key.strip()] = int(value) if key.strip() == "degree" else float(value)
        except ValueError:
            raise InputError(f"non-numeric kernel parameter {item!r}") from None
    return kernel_from_dict(params)
