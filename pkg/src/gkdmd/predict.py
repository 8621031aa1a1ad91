"""Online prediction: eigenfunctions, mode amplitudes and the kernel preimage.

For an initial state ``theta`` and horizon ``T >= 2`` the lifted prediction
is ``sum_i lambda_i^(T-1) phi_i(theta) zeta_i = B g``, a combination of the
lifted training successors ``Psi(y_i)``. The state estimate is the preimage

    argmin_z  h(z, z) - 2 sum_i g_i h(y_i, z),

solved locally with L-BFGS. Nothing here depends on the feature dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._lbfgs import minimize_lbfgs
from .errors import InputError, ModelError, NumericError
from .kernels import GaussianKernel
from .model import ReducedModel

__all__ = [
    "PreimageConfig",
    "AmplitudeVector",
    "eigenfunctions",
    "amplitudes",
    "preimage",
    "preimage_objective",
    "predict",
    "predict_path",
    "complex_power",
]

IMAG_TOL = 1e-6


@dataclass(frozen=True)
class PreimageConfig:
    max_iters: int = 500
    grad_tol: float = 1e-8
    memory: int = 10
    n_restarts: int = 3

    def __post_init__(self):
        for name in ("max_iters", "grad_tol", "memory", "n_restarts"):
            if not getattr(self, name) > 0:
                raise InputError(f"PreimageConfig.{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class AmplitudeVector:
    g: np.ndarray
    imag_residual: float


def complex_power(base, n: int) -> np.ndarray:
    """Elementwise ``base**n`` by repeated squaring, ``O(log n)`` multiplications."""
    if n < 0:
        raise InputError(f"exponent must be nonnegative, got {n}")
    base = np.array(base, dtype=complex)
    out = np.ones_like(base)
    while n:
        if n & 1:
            out = out * base
        n >>= 1
        if n:
            base = base * base
    return out


def _theta(model: ReducedModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise InputError(f"theta must have dimension p={model.p}, got shape {theta.shape}")
    return theta


def eigenfunctions(model: ReducedModel, theta) -> np.ndarray:
    """Values ``phi_i(theta) = xi_i^* R A^* Psi(theta)``, ``i = 1..k``."""
    theta = _theta(model, theta)
    kx = model.kernel.gram(model.X, theta[:, None])[:, 0]
    return kx @ model.eigfun_weights


def amplitudes(model: ReducedModel, phi, T: int) -> AmplitudeVector:
    """Weights ``g`` of the lifted prediction ``B g`` at horizon ``T``."""
    if int(T) != T or T < 2:
        raise InputError(f"horizon T must be an integer >= 2, got {T}")
    phi = np.asarray(phi, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        c = model.amplitude_basis @ (complex_power(model.lambdas, int(T) - 1) * phi)
    if not np.all(np.isfinite(c)):
        top = float(np.abs(model.lambdas).max(initial=0.0))
        raise NumericError(
            f"amplitudes overflow at horizon T={int(T)} (largest |lambda| = {top:.6g})"
        )
    re = np.linalg.norm(c.real)
    resid = float(np.linalg.norm(c.imag) / max(re, np.finfo(float).tiny))
    if np.linalg.norm(c.imag) > 0 and resid > IMAG_TOL:
        raise ModelError(
            f"amplitudes have imaginary residual {resid:.3e} > {IMAG_TOL:g}; "
            "conjugate eigenpairs of the model are inconsistent"
        )
    return AmplitudeVector(np.ascontiguousarray(c.real), resid)


def preimage_objective(model: ReducedModel, g):
    """Return ``z -> (J(z), grad J(z))``.

    For the Gaussian kernel the constant ``h(z, z) = 1`` is left out of ``J``.
    """
    kernel, Y = model.kernel, model.Y
    g = np.asarray(g, dtype=float)
    gaussian = isinstance(kernel, GaussianKernel)

    def fun_and_grad(z):
        kz = kernel.gram(Y, z[:, None])[:, 0]
        f = -2.0 * (g @ kz)
        if not gaussian:
            f += kernel.self_eval(z)
        grad = kernel.self_grad(z) - 2.0 * kernel.grad_z_sum(Y, z, g)
        return float(f), grad

    return fun_and_grad


def preimage(model: ReducedModel, g, init, cfg: PreimageConfig = PreimageConfig()) -> np.ndarray:
    """Local minimizer of the kernel preimage objective.

    Starts from ``init`` and, when ``cfg.n_restarts > 1``, also from the
    training successors with the largest ``|g_i|``; the lowest objective wins.
    """
    g = g.g if isinstance(g, AmplitudeVector) else np.asarray(g, dtype=float)
    init = _theta(model, init)
    if g.shape != (model.m,):
        raise InputError(f"amplitude vector must have length m={model.m}, got {g.shape}")
    fg = preimage_objective(model, g)
    starts = [init]
    if cfg.n_restarts > 1:
        order = np.argsort(-np.abs(g), kind="stable")[: cfg.n_restarts - 1]
        starts += [model.Y[:, i] for i in order]
    best = None
    for z0 in starts:
        res = minimize_lbfgs(
            fg, z0, max_iters=cfg.max_iters, grad_tol=cfg.grad_tol, memory=cfg.memory
        )
        if best is None or res.fun < best.fun:
            best = res
    return best.x


def _default_init(model: ReducedModel, theta, g: np.ndarray, T: int) -> np.ndarray:
    if T == 2 or g.size == 0 or not np.any(g):
        return theta
    return model.Y[:, int(np.argmax(np.abs(g)))]


def predict(model: ReducedModel, theta, T: int, cfg: PreimageConfig = PreimageConfig()) -> np.ndarray:
    """State estimate at horizon ``T`` started from ``theta`` (``T = 2`` is one step)."""
    theta = _theta(model, theta)
    amp = amplitudes(model, eigenfunctions(model, theta), T)
    return preimage(model, amp, _default_init(model, theta, amp.g, int(T)), cfg)


def predict_path(model: ReducedModel, theta, T_max: int, cfg: PreimageConfig = PreimageConfig()):
    """Predictions for ``T = 2..T_max``; the eigenfunctions are evaluated once."""
    theta = _theta(model, theta)
    if int(T_max) != T_max or T_max < 2:
        raise InputError(f"T_max must be an integer >= 2, got {T_max}")
    phi = eigenfunctions(model, theta)
    out = []
    for T in range(2, int(T_max) + 1):
        amp = amplitudes(model, phi, T)
        out.append(preimage(model, amp, _default_init(model, theta, amp.g, T), cfg))
    return out
