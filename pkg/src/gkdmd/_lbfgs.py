"""Limited-memory BFGS with Armijo backtracking, for small dense problems."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)  # objective at each accepted iterate


def _check(f, g, x, it):
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericError(
            f"non-finite objective or gradient at iteration {it}: "
            f"J={f!r}, |grad|_inf={np.max(np.abs(g)) if g.size else 0.0!r}, "
            f"|z|_2={np.linalg.norm(x)!r}"
        )


def minimize_lbfgs(
    fun_and_grad,
    x0,
    *,
    max_iters: int = 500,
    grad_tol: float = 1e-8,
    memory: int = 10,
    c1: float = 1e-4,
    max_backtracks: int = 60,
) -> LBFGSResult:
    """Minimize ``f`` given ``fun_and_grad(x) -> (f, grad)``.

    Stops when ``max|grad| < grad_tol``, after ``max_iters`` iterations, or
    when the line search cannot make progress. Every accepted step satisfies
    the Armijo condition, so the objective never increases.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_and_grad(x)
    _check(f, g, x, 0)
    hist: deque = deque(maxlen=memory)
    trace = [float(f)]

    for it in range(max_iters):
        if np.max(np.abs(g), initial=0.0) < grad_tol:
            return LBFGSResult(x, f, g, it, True, trace)

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(hist):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if hist:
            s, y, _ = hist[-1]
            q *= (s @ y) / (y @ y)
        else:
            q /= max(np.linalg.norm(g), 1.0)
        for (s, y, rho), a in zip(hist, reversed(alphas)):
            q += (a - rho * (y @ q)) * s
        d = -q

        slope = g @ d
        if not slope < 0:
            hist.clear()
            d = -g / max(np.linalg.norm(g), 1.0)
            slope = g @ d

        t = 1.0
        for _ in range(max_backtracks):
            x_new = x + t * d
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            return LBFGSResult(x, f, g, it, False, trace)
        _check(f_new, g_new, x_new, it + 1)

        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            hist.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        trace.append(float(f))

    return LBFGSResult(
        x, f, g, max_iters, bool(np.max(np.abs(g), initial=0.0) < grad_tol), trace
    )
