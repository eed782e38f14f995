"""Truncated energies for constant-sign solutions and their minimization.

Two problem families are covered. In the Steklov family the interior
reaction ``-f`` and the boundary term ``zeta |u|^(p-2) u - g`` are cut off
outside ``[0, ubar]`` (or ``[-ubar, 0]``). In the Robin family the interior
term is ``zeta |u|^(p-2) u - f`` and the boundary term is
``-beta |u|^(p-2) u``. The truncated primitives are exact piecewise closed
forms, so the energies and gradients are evaluated without extra quadrature
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descent import minimize
from .mesh import FemFunction, FemSpace
from .musielak import ExponentConfig, WeightField, abs_pow, modular_full
from .operators import (
    NonlinearitySpec,
    evaluate_f,
    evaluate_g,
    primitive_F,
    primitive_G,
    signed_pow,
)

__all__ = [
    "TruncationSet",
    "TruncationError",
    "NontrivialityError",
    "EnergyBreakdown",
    "DoublePhaseFunctional",
    "SolveOptions",
    "SolveCertificate",
    "SignReport",
    "truncation_threshold",
    "compute_truncation_bound",
    "make_truncation",
    "truncation_eval",
    "truncation_primitive",
    "truncated_functional",
    "energy",
    "small_t_search",
    "minimize_energy",
    "verify_constant_sign",
]


class TruncationError(ValueError):
    pass


class NontrivialityError(RuntimeError):
    """Every start ended at non-negative energy."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


# -- truncation bound ------------------------------------------------------

def _superlinear_threshold(reaction: Callable, q: float, c: float, terms, constant: float) -> float:
    """Smallest ``M`` with ``reaction(s) s >= c |s|^q`` for all ``|s| >= M``.

    Closed form for a single power term. Otherwise the generalized polynomial
    ``reaction(s) s / |s|^q - c`` is scanned on a geometric grid up to a
    point past which the leading term dominates the rest, and the last sign
    change is refined by bisection (separately for ``s > 0`` and ``s < 0``).
    """
    live = [t for t in terms if t.coeff != 0]
    lead = max(live, key=lambda t: t.exponent)
    if len(live) == 1 and constant == 0:
        return (c / lead.coeff) ** (1.0 / (lead.exponent - q))
    # beyond s_dom each other term is at most lead/(n+1) of the leading one
    others = [(abs(t.coeff), t.exponent) for t in live if t is not lead]
    others += [(abs(constant), 1.0), (c, q)]
    k = len(others) + 1
    s_dom = 1.0
    for a, e in others:
        if a > 0:
            s_dom = max(s_dom, (k * a / lead.coeff) ** (1.0 / (lead.exponent - e)))
    grid = np.geomspace(1e-12, 2.0 * s_dom, 4000)
    best = 0.0
    for sgn in (1.0, -1.0):
        def phi(s):
            return reaction(sgn * s) * (sgn * s) / s ** q - c
        vals = phi(grid)
        bad = np.nonzero(vals < 0)[0]
        if len(bad) == 0:
            continue
        lo, hi = grid[bad[-1]], grid[min(bad[-1] + 1, len(grid) - 1)]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi(mid) < 0:
                lo = mid
            else:
                hi = mid
        best = max(best, hi)
    return best


def truncation_threshold(spec: NonlinearitySpec, cfg: ExponentConfig, zeta: float,
                         kind: str) -> float:
    """Raw cut-off threshold: ``M3 = max(M1, M2)`` (Steklov) or ``M`` (Robin).

    Steklov: ``f(s) s >= |s|^q`` for ``|s| >= M1`` and ``g(s) s >= zeta |s|^q``
    for ``|s| >= M2``. Robin: ``f(s) s >= zeta |s|^q`` for ``|s| >= M``.
    """
    if spec.has_gradient:
        raise TruncationError("truncation needs f independent of the gradient")
    if not spec.f_superlinear(cfg.q):
        raise TruncationError("f is not superlinear at infinity relative to |s|^(q-2) s")

    def f(s):
        return evaluate_f(spec, None, s)

    if kind == "steklov":
        if not spec.g_superlinear(cfg.q):
            raise TruncationError("g is not superlinear at infinity relative to |s|^(q-2) s")

        def g(s):
            return evaluate_g(spec, None, s)

        m1 = _superlinear_threshold(f, cfg.q, 1.0, spec.interior, spec.f_constant)
        m2 = _superlinear_threshold(g, cfg.q, zeta, spec.boundary, spec.g_constant)
        return max(m1, m2)
    if kind == "robin":
        return _superlinear_threshold(f, cfg.q, zeta, spec.interior, spec.f_constant)
    raise ValueError(f"unknown truncation kind {kind!r}")


def compute_truncation_bound(spec: NonlinearitySpec, cfg: ExponentConfig, zeta: float,
                             kind: str = "steklov", safety: float = 1.5) -> float:
    """``ubar = safety * max(threshold, 1)``."""
    return safety * max(truncation_threshold(spec, cfg, zeta, kind), 1.0)


@dataclass(frozen=True)
class TruncationSet:
    kind: str                 # "steklov" or "robin"
    ubar: float
    p: float
    zeta: float
    theta: float = 1.0
    beta: float | None = None
    allow_theta_above_one: bool = False

    def __post_init__(self):
        if self.kind not in ("steklov", "robin"):
            raise TruncationError(f"unknown truncation kind {self.kind!r}")
        if not self.ubar > 1:
            raise TruncationError(f"ubar must exceed 1, got {self.ubar}")
        if not self.theta > 0:
            raise TruncationError(f"theta must be positive, got {self.theta}")
        if self.kind == "steklov" and self.theta > 1 and not self.allow_theta_above_one:
            raise TruncationError("Steklov family needs theta in (0, 1]; set allow_theta_above_one")
        if self.kind == "robin" and not (self.beta is not None and self.beta > 0):
            raise TruncationError("Robin family needs beta > 0")

    @property
    def lower(self) -> float:
        return -self.ubar

    def validate(self, spec: NonlinearitySpec, cfg: ExponentConfig) -> None:
        """Raise unless ``ubar`` is at least the computed threshold."""
        m = truncation_threshold(spec, cfg, self.zeta, self.kind)
        if self.ubar < m:
            raise TruncationError(f"ubar={self.ubar} is below the threshold {m}")

    def core(self, spec: NonlinearitySpec, s):
        """Untruncated (interior, boundary) reaction terms."""
        zs = self.zeta * signed_pow(s, self.p)
        if self.kind == "steklov":
            return -evaluate_f(spec, None, s), zs - evaluate_g(spec, None, s)
        return zs - evaluate_f(spec, None, s), -self.beta * signed_pow(s, self.p)

    def core_primitive(self, spec: NonlinearitySpec, s):
        zs = self.zeta * abs_pow(s, self.p) / self.p
        if self.kind == "steklov":
            return -primitive_F(spec, None, s), zs - primitive_G(spec, None, s)
        return zs - primitive_F(spec, None, s), -self.beta * abs_pow(s, self.p) / self.p


def make_truncation(kind: str, spec: NonlinearitySpec, cfg: ExponentConfig, zeta: float,
                    theta: float = 1.0, beta: float | None = None, **kw) -> TruncationSet:
    ubar = compute_truncation_bound(spec, cfg, zeta, kind)
    return TruncationSet(kind, ubar, cfg.p, zeta, theta, beta, **kw)


def _clip(T, s, sign):
    """(clipped s, mask of the wrong side, mask beyond the bound)."""
    s = np.asarray(s, dtype=float)
    if sign > 0:
        return np.clip(s, 0.0, T.ubar), s < 0, s > T.ubar
    return np.clip(s, -T.ubar, 0.0), s > 0, s < -T.ubar


def truncation_eval(T: TruncationSet, spec: NonlinearitySpec, x, s, sign: int = 1):
    """Cut-off (interior, boundary) terms: zero on the wrong side of 0 and
    frozen at the bound beyond ``ubar`` (or below ``-ubar``)."""
    sc, wrong, _ = _clip(T, s, sign)
    a, b = T.core(spec, sc)
    return np.where(wrong, 0.0, a), np.where(wrong, 0.0, b)


def truncation_primitive(T: TruncationSet, spec: NonlinearitySpec, x, s, sign: int = 1):
    """Primitives from 0 of :func:`truncation_eval`; linear beyond the bound."""
    s = np.asarray(s, dtype=float)
    sc, wrong, _ = _clip(T, s, sign)
    pa, pb = T.core_primitive(spec, sc)
    a, b = T.core(spec, sc)
    # zero excess inside the interval, so the tail term only acts beyond it
    excess = s - sc
    return np.where(wrong, 0.0, pa + a * excess), np.where(wrong, 0.0, pb + b * excess)


# -- energies ----------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBreakdown:
    grad_p: float
    grad_q: float
    val_p: float
    val_q: float
    interior_primitive: float
    boundary_primitive: float
    linear: float = 0.0

    @property
    def total(self) -> float:
        return (self.grad_p + self.grad_q + self.val_p + self.val_q
                - self.interior_primitive - self.boundary_primitive - self.linear)

    def to_dict(self) -> dict:
        return {"grad_p": self.grad_p, "grad_q": self.grad_q, "val_p": self.val_p,
                "val_q": self.val_q, "interior_primitive": self.interior_primitive,
                "boundary_primitive": self.boundary_primitive, "linear": self.linear,
                "total": self.total}


class DoublePhaseFunctional:
    """``1/p |grad u|^p + 1/q mu |grad u|^q + c/p |u|^p + 1/q mu |u|^q``
    integrated, minus interior and boundary potentials, minus ``b . u``.

    Potentials are pairs ``(P, P')`` of vectorized callables of the value.
    """

    def __init__(self, space: FemSpace, cfg: ExponentConfig, mu: WeightField,
                 value_p_coeff: float = 1.0, interior=None, boundary=None, linear=None):
        self.space, self.cfg, self.mu = space, cfg, mu
        self.c = float(value_p_coeff)
        self.interior, self.boundary = interior, boundary
        self.linear = None if linear is None else np.asarray(linear, dtype=float)
        self._mu_q = mu.at_quadrature(space)
        self._mu_t = mu.per_triangle(space)

    def breakdown(self, u) -> EnergyBreakdown:
        sp, p, q = self.space, self.cfg.p, self.cfg.q
        u = sp.check(u)
        gn = np.hypot(*sp.gradients(u).T)
        v = sp.values(u)
        ip = bp = 0.0
        if self.interior is not None:
            ip = sp.integrate(self.interior[0](v))
        if self.boundary is not None:
            bp = sp.integrate_boundary(self.boundary[0](sp.traces(u)))
        return EnergyBreakdown(
            sp.integrate_per_triangle(gn ** p) / p,
            sp.integrate_per_triangle(self._mu_t * gn ** q) / q,
            self.c * sp.integrate(abs_pow(v, p)) / p,
            sp.integrate(self._mu_q * abs_pow(v, q)) / q,
            ip, bp,
            0.0 if self.linear is None else float(np.dot(self.linear, u)),
        )

    def value(self, u) -> float:
        return self.breakdown(u).total

    def gradient(self, u) -> np.ndarray:
        return self.value_and_grad(u)[1]

    def value_and_grad(self, u):
        sp, p, q = self.space, self.cfg.p, self.cfg.q
        u = sp.check(u)
        g = sp.gradients(u)
        gn = np.hypot(g[:, 0], g[:, 1])
        w = np.zeros_like(gn)
        nz = gn > 0
        w[nz] = gn[nz] ** (p - 2.0) + self._mu_t[nz] * gn[nz] ** (q - 2.0)
        v = sp.values(u)
        vals = self.c * signed_pow(v, p) + self._mu_q * signed_pow(v, q)
        total = (sp.integrate_per_triangle(gn ** p) / p
                 + sp.integrate_per_triangle(self._mu_t * gn ** q) / q
                 + self.c * sp.integrate(abs_pow(v, p)) / p
                 + sp.integrate(self._mu_q * abs_pow(v, q)) / q)
        if self.interior is not None:
            total -= sp.integrate(self.interior[0](v))
            vals = vals - self.interior[1](v)
        grad = sp.load_flux(w[:, None] * g) + sp.load_values(vals)
        if self.boundary is not None:
            tr = sp.traces(u)
            total -= sp.integrate_boundary(self.boundary[0](tr))
            grad -= sp.load_boundary(self.boundary[1](tr))
        if self.linear is not None:
            total -= float(np.dot(self.linear, u))
            grad = grad - self.linear
        return total, grad


def truncated_functional(space: FemSpace, T: TruncationSet, spec: NonlinearitySpec,
                         cfg: ExponentConfig, mu: WeightField, sign: int = 1,
                         truncated: bool = True) -> DoublePhaseFunctional:
    """Energy of the plus (``sign=1``) or minus (``sign=-1``) truncated problem.

    With ``truncated=False`` the cut-offs are dropped, giving the energy whose
    gradient is the weak residual of the original boundary value problem.
    """
    if truncated:
        interior = (lambda s: truncation_primitive(T, spec, None, s, sign)[0],
                    lambda s: truncation_eval(T, spec, None, s, sign)[0])
        boundary = (lambda s: truncation_primitive(T, spec, None, s, sign)[1],
                    lambda s: truncation_eval(T, spec, None, s, sign)[1])
    else:
        interior = (lambda s: T.core_primitive(spec, s)[0], lambda s: T.core(spec, s)[0])
        boundary = (lambda s: T.core_primitive(spec, s)[1], lambda s: T.core(spec, s)[1])
    return DoublePhaseFunctional(space, cfg, mu, T.theta, interior, boundary)


def energy(space: FemSpace, u, T: TruncationSet, spec: NonlinearitySpec,
           cfg: ExponentConfig, mu: WeightField, sign: int = 1) -> EnergyBreakdown:
    return truncated_functional(space, T, spec, cfg, mu, sign).breakdown(u)


def small_t_search(functional: DoublePhaseFunctional, u, kmax: int = 26):
    """First ``k <= kmax`` with ``E(2^-k u) < 0``; returns ``(k, t, E)`` or None."""
    u = np.asarray(u, dtype=float)
    for k in range(kmax + 1):
        t = 2.0 ** -k
        e = functional.value(t * u)
        if e < 0:
            return k, t, e
    return None


# -- minimization ------------------------------------------------------------

@dataclass(frozen=True)
class SolveOptions:
    gtol: float = 1e-8
    maxiter: int = 20000
    seed: int = 0
    sign_tol: float = 1e-8
    residual_tol: float = 1e-6
    kmax: int = 26


@dataclass
class SolveCertificate:
    sign: int
    energy: float
    negative_energy: bool
    residual: float
    converged: bool
    start: str
    iterations: int
    starts: list = field(default_factory=list)
    small_t: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "sign": self.sign, "energy": self.energy, "negative_energy": self.negative_energy,
            "residual": self.residual, "converged": self.converged, "start": self.start,
            "iterations": self.iterations, "starts": self.starts,
            "small_t": None if self.small_t is None else
            {"k": self.small_t[0], "t": self.small_t[1], "energy": self.small_t[2]},
        }


def minimize_energy(space: FemSpace, T: TruncationSet, spec: NonlinearitySpec,
                    cfg: ExponentConfig, mu: WeightField, sign: int = 1,
                    eigenfunction=None, opts: SolveOptions | None = None,
                    require_negative: bool = True):
    """Multistart descent on the truncated energy.

    Starts: a small constant of the requested sign, the eigenfunction scaled
    by the first dyadic factor giving negative energy (when supplied) and a
    seeded random field of the requested sign. The lowest energy wins, ties
    going to the smaller residual.

    Returns ``(FemFunction, EnergyBreakdown, SolveCertificate)``.
    """
    opts = opts or SolveOptions()
    fn = truncated_functional(space, T, spec, cfg, mu, sign)
    rng = np.random.default_rng(opts.seed)
    starts = [("small_constant", np.full(space.n_dofs, 1e-3 * sign))]
    small_t = None
    if eigenfunction is not None:
        e = np.abs(np.asarray(eigenfunction, dtype=float)) * sign
        small_t = small_t_search(fn, e, opts.kmax)
        if small_t is not None:
            starts.append(("scaled_eigenfunction", small_t[1] * e))
    starts.append(("random", sign * rng.uniform(0.0, T.ubar, space.n_dofs)))
    records = []
    best = None
    for label, x0 in starts:
        res = minimize(fn.value_and_grad, x0, gtol=opts.gtol, maxiter=opts.maxiter)
        records.append({"start": label, "energy": res.fun, "residual": res.gnorm,
                        "converged": res.converged, "iterations": res.iterations})
        key = (res.fun, res.gnorm)
        if best is None or key < best[0]:
            best = (key, label, res)
    _, label, res = best
    cert = SolveCertificate(sign, res.fun, res.fun < 0, res.gnorm, res.converged, label,
                            res.iterations, records, small_t)
    if require_negative and not res.fun < 0:
        raise NontrivialityError(
            "failed nontriviality: every start converged to energy >= 0 "
            "(zeta may be too close to the eigenvalue, or a hypothesis fails)", cert)
    return FemFunction(space, res.x), fn.breakdown(res.x), cert


@dataclass(frozen=True)
class SignReport:
    sign: int
    min_value: float
    max_value: float
    bounds_ok: bool
    wrong_sign_modular: float
    sign_pure: bool
    untruncated_residual: float
    residual_ok: bool

    @property
    def ok(self) -> bool:
        return self.bounds_ok and self.sign_pure and self.residual_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ok"] = self.ok
        return d


def verify_constant_sign(space: FemSpace, u, T: TruncationSet, spec: NonlinearitySpec,
                         cfg: ExponentConfig, mu: WeightField, sign: int = 1,
                         tol: float = 1e-8, residual_tol: float = 1e-6) -> SignReport:
    """Nodal bounds, sign purity and the weak residual of the original problem."""
    u = space.check(u)
    lo, hi = (0.0, T.ubar) if sign > 0 else (T.lower, 0.0)
    bounds_ok = bool(u.min() >= lo - tol and u.max() <= hi + tol)
    wrong = np.maximum(-sign * u, 0.0)
    wrong_mod = modular_full(space, wrong, cfg, mu).total
    fn = truncated_functional(space, T, spec, cfg, mu, sign, truncated=False)
    r = float(np.max(np.abs(fn.gradient(u))))
    return SignReport(sign, float(u.min()), float(u.max()), bounds_ok, wrong_mod,
                      bool(wrong_mod <= tol), r, bool(math.isfinite(r) and r <= residual_tol))
