"""Modulars and Luxemburg norms for the double phase integrand t^p + mu(x) t^q."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import FemSpace

__all__ = [
    "ExponentConfig",
    "WeightField",
    "ModularReport",
    "NormRelationReport",
    "NormBracketError",
    "abs_pow",
    "modular_plain",
    "modular_full",
    "luxemburg_norm",
    "check_modular_norm_relations",
    "check_modular_trends",
]


class NormBracketError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExponentConfig:
    """Exponents ``1 < p < q`` in dimension ``N``.

    With ``strict_mode`` (the default) ``q < N`` is enforced as well.
    """

    p: float
    q: float
    N: int = 2
    strict_mode: bool = True

    def __post_init__(self):
        if not (1.0 < self.p < self.q):
            raise ValueError(f"need 1 < p < q, got p={self.p}, q={self.q}")
        if self.N < 2:
            raise ValueError(f"dimension must be at least 2, got N={self.N}")
        if self.strict_mode and not self.q < self.N:
            raise ValueError(f"q={self.q} >= N={self.N}; pass strict_mode=False to override")

    @property
    def p_star(self) -> float:
        """Sobolev critical exponent ``Np/(N-p)``."""
        if self.p >= self.N:
            raise ValueError("critical exponents need p < N")
        return self.N * self.p / (self.N - self.p)

    @property
    def p_lower_star(self) -> float:
        """Trace critical exponent ``(N-1)p/(N-p)``."""
        if self.p >= self.N:
            raise ValueError("critical exponents need p < N")
        return (self.N - 1) * self.p / (self.N - self.p)


@dataclass(frozen=True, eq=False)
class WeightField:
    """Nodal samples of the weight ``mu >= 0``, interpolated linearly."""

    values: np.ndarray
    description: str = "nodal"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("weight must be a nodal vector")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("weight values must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, space: FemSpace, m: float) -> WeightField:
        return cls(np.full(space.n_dofs, float(m)), f"constant:{m!r}")

    @classmethod
    def linear_x1(cls, space: FemSpace, scale: float = 1.0) -> WeightField:
        return cls(scale * space.mesh.vertices[:, 0], f"linear_x1:{scale!r}")

    @classmethod
    def vanishing_half_plane(cls, space: FemSpace, scale: float = 1.0) -> WeightField:
        """``scale * max(x1 - 1/2, 0)``: zero on the left half of the unit square."""
        return cls(scale * np.maximum(space.mesh.vertices[:, 0] - 0.5, 0.0),
                   f"vanishing_half_plane:{scale!r}")

    def at_quadrature(self, space: FemSpace) -> np.ndarray:
        key = id(space)
        if key not in self._cache:
            if len(self.values) != space.n_dofs:
                raise ValueError("weight does not match the space")
            self._cache[key] = space.values(self.values)
        return self._cache[key]

    def per_triangle(self, space: FemSpace) -> np.ndarray:
        """Triangle means of mu, so that ``area * mean = int_T mu``."""
        return self.values[space.mesh.triangles].mean(axis=1)

    def on_boundary(self, space: FemSpace) -> np.ndarray:
        return space.traces(self.values)


def abs_pow(x, r):
    """``|x|^r`` with ``0^r = 0``."""
    return np.abs(x) ** r


@dataclass(frozen=True)
class ModularReport:
    gradient_p_term: float
    gradient_q_term: float
    value_p_term: float
    value_q_term: float
    norm0: float = math.nan

    @property
    def total(self) -> float:
        return self.gradient_p_term + self.gradient_q_term + self.value_p_term + self.value_q_term

    def csv_row(self) -> tuple:
        return (self.gradient_p_term, self.gradient_q_term, self.value_p_term,
                self.value_q_term, self.total, self.norm0)

    CSV_HEADER = ("grad_p", "grad_q", "val_p", "val_q", "total", "norm0")


def _value_terms(space, u, cfg, mu):
    vals = space.values(u)
    val_p = space.integrate(abs_pow(vals, cfg.p))
    val_q = space.integrate(mu.at_quadrature(space) * abs_pow(vals, cfg.q))
    return val_p, val_q


def _gradient_terms(space, u, cfg, mu):
    g = np.hypot(*space.gradients(u).T)
    grad_p = space.integrate_per_triangle(g ** cfg.p)
    grad_q = space.integrate_per_triangle(mu.per_triangle(space) * g ** cfg.q)
    return grad_p, grad_q


def modular_plain(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField) -> float:
    """``int (|u|^p + mu |u|^q) dx``."""
    return sum(_value_terms(space, space.check(u), cfg, mu))


def modular_full(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField) -> ModularReport:
    """Four-term breakdown of the modular including the gradient."""
    u = space.check(u)
    grad_p, grad_q = _gradient_terms(space, u, cfg, mu)
    val_p, val_q = _value_terms(space, u, cfg, mu)
    return ModularReport(grad_p, grad_q, val_p, val_q)


def luxemburg_norm(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField,
                   which: str = "full", rtol: float = 1e-12) -> float:
    """Luxemburg norm: the ``tau > 0`` with ``modular(u / tau) = 1``.

    ``which="plain"`` uses the modular of ``u`` alone, ``which="full"`` adds
    the gradient terms (the norm ``||u||_0``). Since the modular of ``u/tau``
    is ``tau^-p P + tau^-q Q`` with fixed ``P, Q >= 0``, the root is found by
    bisection on a scalar function.
    """
    u = space.check(u)
    if which == "plain":
        P, Q = _value_terms(space, u, cfg, mu)
    elif which == "full":
        gp, gq = _gradient_terms(space, u, cfg, mu)
        vp, vq = _value_terms(space, u, cfg, mu)
        P, Q = gp + vp, gq + vq
    else:
        raise ValueError(f"which must be 'plain' or 'full', got {which!r}")
    if P == 0.0 and Q == 0.0:
        return 0.0

    def rho(tau):
        return P * tau ** -cfg.p + Q * tau ** -cfg.q

    lo = hi = 1.0
    for _ in range(200):
        if rho(hi) <= 1.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NormBracketError("could not bracket the norm from above")
    if lo == hi:
        for _ in range(200):
            if rho(lo) > 1.0:
                break
            hi, lo = lo, 0.5 * lo
        else:
            raise NormBracketError("could not bracket the norm from below")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class NormRelationReport:
    norm0: float
    modular: float
    unit_modular: float
    clause_i: bool
    clause_ii: bool
    clause_iii: bool
    clause_iv: bool

    @property
    def ok(self) -> bool:
        return self.clause_i and self.clause_ii and self.clause_iii and self.clause_iv

    @property
    def failed(self) -> list[str]:
        names = ("clause_i", "clause_ii", "clause_iii", "clause_iv")
        return [n for n in names if not getattr(self, n)]


def check_modular_norm_relations(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField,
                                 slack: float = 1e-9, unit_tol: float = 1e-10
                                 ) -> NormRelationReport:
    """Check the unit-ball, trichotomy and power-bound relations for one ``u != 0``.

    Clauses iii and iv hold vacuously when their premise is false.
    """
    u = space.check(u)
    norm = luxemburg_norm(space, u, cfg, mu, "full")
    if norm == 0.0:
        raise ValueError("relations need u != 0")
    rho = modular_full(space, u, cfg, mu).total
    unit = modular_full(space, u / norm, cfg, mu).total
    clause_i = abs(unit - 1.0) <= unit_tol

    def side(x):
        return 0 if abs(x - 1.0) <= slack else (1 if x > 1.0 else -1)

    clause_ii = side(norm) == side(rho) or abs(norm - 1.0) <= slack or abs(rho - 1.0) <= slack
    clause_iii = True
    if norm < 1.0:
        clause_iii = norm ** cfg.q - slack <= rho <= norm ** cfg.p + slack
    clause_iv = True
    if norm > 1.0:
        clause_iv = norm ** cfg.p - slack <= rho <= norm ** cfg.q + slack
    return NormRelationReport(norm, rho, unit, clause_i, clause_ii, clause_iii, clause_iv)


def check_modular_trends(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField,
                         scales) -> dict:
    """Norm and modular along ``s * u`` for a monotone sequence of scales.

    Returns both sequences and whether they move in the same direction as
    the scales (the limit relations at 0 and at infinity).
    """
    u = space.check(u)
    scales = np.asarray(scales, dtype=float)
    norms = np.array([luxemburg_norm(space, s * u, cfg, mu) for s in scales])
    rhos = np.array([modular_full(space, s * u, cfg, mu).total for s in scales])
    direction = np.sign(np.diff(scales))
    same_norm = bool(np.all(np.sign(np.diff(norms)) == direction))
    same_rho = bool(np.all(np.sign(np.diff(rhos)) == direction))
    return {"scales": scales, "norms": norms, "modulars": rhos,
            "monotone": same_norm and same_rho}
