"""Gradient-based minimization with Armijo backtracking.

Two directions are available: steepest descent and limited-memory BFGS.
Both share the same backtracking line search, so every accepted step
satisfies the sufficient-decrease condition.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

__all__ = ["DescentResult", "minimize"]


@dataclass
class DescentResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    gnorm: float
    iterations: int
    converged: bool
    message: str


def _two_loop(g, memory):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _backtrack(fun_grad, x, f, d, slope, alpha, c1, project):
    """Armijo backtracking.

    Near a minimizer the decrease in f falls below rounding; there a step is
    also accepted under the approximate Wolfe conditions of Hager and Zhang,
    which only look at the directional derivative.
    """
    floor = 1e-17 * max(1.0, float(np.max(np.abs(x))))
    dmax = float(np.max(np.abs(d)))
    f_slack = 1e-13 * abs(f)
    while alpha * dmax >= floor:
        x_new = x + alpha * d
        if project is not None:
            x_new = project(x_new)
        f_new, g_new = fun_grad(x_new)
        if np.isfinite(f_new):
            if f_new <= f + c1 * alpha * slope:
                return x_new, f_new, g_new, True
            if f_new <= f + f_slack:
                new_slope = np.dot(g_new, d)
                if 0.9 * slope <= new_slope <= -0.8 * slope:
                    return x_new, f_new, g_new, True
        alpha *= 0.5
    return x, f, None, False


def minimize(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
             x0: np.ndarray, *, gtol: float = 1e-8, maxiter: int = 5000,
             method: str = "lbfgs", memory: int = 20, c1: float = 1e-4,
             project: Callable[[np.ndarray], np.ndarray] | None = None,
             residual: Callable[[np.ndarray, np.ndarray], float] | None = None,
             ) -> DescentResult:
    """Minimize ``f`` from ``x0`` until the residual drops below ``gtol``.

    Parameters
    ----------
    fun_grad : callable
        Returns ``(f(x), grad f(x))``.
    project : callable, optional
        Applied to every accepted iterate (e.g. renormalization).
    residual : callable, optional
        ``residual(x, g)``; defaults to ``max |g|``.
    """
    if method not in ("lbfgs", "gradient"):
        raise ValueError(f"unknown method {method!r}")
    x = np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    f, g = fun_grad(x)
    res = residual or (lambda _x, _g: float(np.max(np.abs(_g))))
    r = res(x, g)
    pairs: deque = deque(maxlen=memory)
    step0 = 1.0 / max(np.linalg.norm(g), 1e-300)
    message = "maximum iterations reached"
    it = 0
    for it in range(1, maxiter + 1):
        if r <= gtol:
            it -= 1
            break
        if method == "lbfgs" and pairs:
            d = _two_loop(g, pairs)
            slope = np.dot(g, d)
            if slope >= 0:
                pairs.clear()
                d, slope = -g, -np.dot(g, g)
            alpha = 1.0
        else:
            d, slope = -g, -np.dot(g, g)
            alpha = step0
        x_new, f_new, g_new, ok = _backtrack(fun_grad, x, f, d, slope, alpha, c1, project)
        if not ok:
            if pairs:
                pairs.clear()
                continue
            message = "line search failed"
            break
        s, y = x_new - x, g_new - g
        sy = np.dot(s, y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        if method == "gradient":
            # Barzilai-Borwein guess for the next trial step
            step0 = np.dot(s, s) / sy if sy > 0 else 2.0 * alpha
        x, f, g = x_new, f_new, g_new
        r = res(x, g)
    converged = r <= gtol
    if converged:
        message = "converged"
    log.debug("minimize: %s after %d iterations, f=%.6e, residual=%.3e", message, it, f, r)
    return DescentResult(x, float(f), g, r, it, converged, message)
