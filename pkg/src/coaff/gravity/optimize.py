"""BFGS ascent with a backtracking line search for smooth log-likelihoods."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    message: str
    history: list[float] = field(default_factory=list)
    newton_resets: int = 0


def _inverse_neg(hess: np.ndarray | None, n: int) -> np.ndarray:
    """Inverse of ``-hess`` when it is positive definite, else the identity."""
    if hess is not None:
        try:
            L = np.linalg.cholesky(-hess)
        except np.linalg.LinAlgError:
            pass
        else:
            Linv = np.linalg.inv(L)
            return Linv.T @ Linv
    return np.eye(n)


def bfgs_maximize(
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
    rtol: float = 1e-8,
    gtol: float = 1e-5,
    max_iter: int = 500,
    max_step: float = 5.0,
    c1: float = 1e-4,
    max_backtracks: int = 40,
) -> OptimizeResult:
    """Maximise ``f`` given ``fg(x) -> (f, grad)``.

    Convergence requires both a relative change in ``f`` below `rtol` and a
    gradient max-norm below `gtol`.  When `hess` is given it seeds the
    inverse-Hessian approximation and is used to reset it whenever the line
    search cannot make progress along the quasi-Newton direction.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f, g = fg(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    Hinv = _inverse_neg(hess(x) if hess is not None else None, n)
    history = [f]
    resets = 0
    f_prev = None

    for it in range(1, max_iter + 1):
        direction = Hinv @ g
        slope = float(g @ direction)
        if slope <= 0:
            # lost ascent property: restart from the exact curvature
            Hinv = _inverse_neg(hess(x) if hess is not None else None, n)
            resets += 1
            direction = Hinv @ g
            slope = float(g @ direction)
            if slope <= 0:
                direction, slope = g.copy(), float(g @ g)

        norm = np.max(np.abs(direction))
        t = min(1.0, max_step / norm) if norm > 0 else 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + t * direction
            try:
                f_new, g_new = fg(x_new)
            except (FloatingPointError, ArithmeticError):
                f_new = -np.inf
            if np.isfinite(f_new) and f_new >= f + c1 * t * slope:
                accepted = True
                break
            t *= 0.5

        if not accepted:
            if hess is not None and resets < max_iter:
                fresh = _inverse_neg(hess(x), n)
                if not np.allclose(fresh, Hinv):
                    Hinv = fresh
                    resets += 1
                    continue
            small_grad = np.max(np.abs(g)) < gtol
            return OptimizeResult(x, f, g, bool(small_grad), it, "line search failed", history, resets)

        s = x_new - x
        yv = g_new - g  # gradient of f; curvature of -f is -yv
        sy = -float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = Hinv @ yv
            # BFGS update of the inverse Hessian of -f (with yv -> -yv)
            Hinv = (Hinv + (1.0 + rho * float(yv @ Hy)) * rho * np.outer(s, s)
                    + rho * (np.outer(Hy, s) + np.outer(s, Hy)))

        f_prev, f = f, f_new
        x, g = x_new, g_new
        history.append(f)
        rel = abs(f - f_prev) / max(abs(f), 1.0)
        gmax = float(np.max(np.abs(g)))
        logger.debug("iter %d f=%.10g rel=%.3g |g|=%.3g", it, f, rel, gmax)
        if rel < rtol and gmax < gtol:
            return OptimizeResult(x, f, g, True, it, "converged", history, resets)

    return OptimizeResult(x, f, g, False, max_iter, "maximum iterations reached", history, resets)
