"""Picard iteration for the double phase problem with a convection term.

Each outer step freezes ``f(x, u_k, grad u_k)`` and ``g(x, u_k)`` and solves
the strictly convex problem

    minimize  int (1/p |grad u|^p + mu/q |grad u|^q + 1/p |u|^p + mu/q |u|^q)
              + zeta/p int_bd |u|^p - int f_k u - int_bd g_k u

whose Euler-Lagrange equation is the weak form with the frozen data. Fixed
points are discrete weak solutions. The loop refuses to run unless one of
the coercivity conditions holds, unless explicitly overridden.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .descent import minimize
from .mesh import FemFunction, FemSpace
from .musielak import ExponentConfig, WeightField, abs_pow, luxemburg_norm
from .operators import (
    ConditionReport,
    NonlinearitySpec,
    assemble_script_A,
    evaluate_f,
    evaluate_g,
    signed_pow,
    weak_residual,
)
from .variational import DoublePhaseFunctional

log = logging.getLogger(__name__)

__all__ = [
    "PicardState",
    "ConvectionOptions",
    "ConvectionResult",
    "GateError",
    "DivergenceError",
    "BoundednessError",
    "damped_update",
    "frozen_load",
    "inner_functional",
    "a_priori_bound",
    "solve_convection",
]


class GateError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    pass


class BoundednessError(RuntimeError):
    pass


@dataclass(frozen=True)
class PicardState:
    iterate: np.ndarray
    outer_index: int
    step_norm: float
    inner_residual: float
    condition_used: str
    damping: float
    norm0: float

    def __post_init__(self):
        if not math.isfinite(self.step_norm):
            raise DivergenceError(f"non-finite step norm at outer step {self.outer_index}")


@dataclass(frozen=True)
class ConvectionOptions:
    tol: float = 1e-8
    max_outer: int = 200
    damping: float = 1.0
    min_damping: float = 1.0 / 64
    growth_window: int = 5
    inner_gtol: float = 1e-11
    inner_maxiter: int = 20000
    residual_tol: float = 1e-6
    allow_uncertified: bool = False


@dataclass
class ConvectionResult:
    solution: FemFunction
    trace: list = field(default_factory=list)
    converged: bool = False
    certified: bool = False
    condition_used: str = "none"
    residual: float = math.inf
    norm0: float = 0.0
    a_priori_bound: float | None = None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged, "certified": self.certified,
            "condition_used": self.condition_used, "residual": self.residual,
            "norm0": self.norm0, "a_priori_bound": self.a_priori_bound,
            "outer_iterations": len(self.trace),
            "final_step_norm": self.trace[-1].step_norm if self.trace else None,
        }


def damped_update(u_old, u_new, damping: float) -> np.ndarray:
    """``damping * u_new + (1 - damping) * u_old``."""
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    u_old = np.asarray(u_old, dtype=float)
    u_new = np.asarray(u_new, dtype=float)
    if damping == 1:
        return u_new.copy()
    return damping * u_new + (1.0 - damping) * u_old


def frozen_load(space: FemSpace, u, spec: NonlinearitySpec) -> np.ndarray:
    """Load vector of ``f(x, u, grad u)`` in the interior and ``g(x, u)`` on the boundary."""
    u = space.check(u)
    grads = np.broadcast_to(space.gradients(u)[:, None, :], space.tri_points.shape)
    b = space.load_values(evaluate_f(spec, space.tri_points, space.values(u), grads))
    return b + space.load_boundary(evaluate_g(spec, space.edge_points, space.traces(u)))


def inner_functional(space: FemSpace, cfg: ExponentConfig, mu: WeightField, zeta: float,
                     load) -> DoublePhaseFunctional:
    """The strictly convex energy of one outer step with fixed load vector."""
    p = cfg.p
    boundary = (lambda s: -zeta * abs_pow(s, p) / p, lambda s: -zeta * signed_pow(s, p))
    return DoublePhaseFunctional(space, cfg, mu, 1.0, None, boundary, load)


def a_priori_bound(report: ConditionReport, case: str, cfg: ExponentConfig,
                   omega1: float, omega2: float, space: FemSpace) -> float:
    """Norm bound for zeros of the composite operator from the coercivity estimate.

    ``slack ||u||_0^p - C <= 0`` forces ``||u||_0 <= max(1, (C / slack)^(1/p))``.
    """
    slack = report.condA_slack_coercive if case == "A" else report.condB_slack
    c = omega1 * space.measure + omega2 * space.perimeter
    return max(1.0, (c / slack) ** (1.0 / cfg.p)) if c > 0 else 1.0


def solve_convection(space: FemSpace, cfg: ExponentConfig, mu: WeightField,
                     spec: NonlinearitySpec, zeta: float, conditions: ConditionReport,
                     opts: ConvectionOptions | None = None, u0=None) -> ConvectionResult:
    """Picard iteration with damping; see the module docstring.

    Raises :class:`GateError` when neither condition holds (unless
    ``opts.allow_uncertified``), :class:`DivergenceError` when the step norm
    keeps growing even at the smallest damping, and
    :class:`BoundednessError` when a certified run leaves the a priori ball.
    """
    opts = opts or ConvectionOptions()
    if not 0 < opts.damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if conditions.condA:
        used = "A"
    elif conditions.condB:
        used = "B"
    else:
        used = "none"
        if not opts.allow_uncertified:
            raise GateError("coercivity gate failed: " + "; ".join(conditions.negative_slacks()))
    certified = used != "none"
    bound = None
    if certified and spec.growth is not None:
        bound = a_priori_bound(conditions, used, cfg, spec.growth.omega1, spec.growth.omega2,
                               space)

    u = np.zeros(space.n_dofs) if u0 is None else space.check(u0).copy()
    damping = opts.damping
    trace: list[PicardState] = []
    growing = 0
    converged = False
    for k in range(1, opts.max_outer + 1):
        fn = inner_functional(space, cfg, mu, zeta, frozen_load(space, u, spec))
        res = minimize(fn.value_and_grad, u, gtol=opts.inner_gtol, maxiter=opts.inner_maxiter)
        u_new = damped_update(u, res.x, damping)
        step = luxemburg_norm(space, u_new - u, cfg, mu)
        norm0 = luxemburg_norm(space, u_new, cfg, mu)
        trace.append(PicardState(u_new, k, step, res.gnorm, used, damping, norm0))
        log.debug("outer %d: step %.3e inner residual %.3e", k, step, res.gnorm)
        if bound is not None and norm0 > bound:
            raise BoundednessError(
                f"iterate norm {norm0:.6g} exceeds the a priori bound {bound:.6g} at step {k}")
        if len(trace) > 1 and step > trace[-2].step_norm:
            growing += 1
        else:
            growing = 0
        u = u_new
        if step < opts.tol:
            # a stalled inner solve also yields a zero step
            converged = res.converged
            if not converged:
                log.warning("inner solve did not converge at outer step %d", k)
            break
        if growing >= opts.growth_window:
            damping *= 0.5
            growing = 0
            if damping < opts.min_damping:
                raise DivergenceError(
                    f"step norm grew for {opts.growth_window} consecutive outer steps down "
                    f"to damping {2 * damping:g}; try a smaller damping or a different start")
            log.info("step norm growing; damping halved to %g", damping)
    r = weak_residual(assemble_script_A(space, u, cfg, mu, spec, zeta))
    return ConvectionResult(FemFunction(space, u), trace, converged,
                            certified and converged and r <= opts.residual_tol, used, r,
                            luxemburg_norm(space, u, cfg, mu), bound)
