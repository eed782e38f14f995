"""Weak-form operators, power-law nonlinearities and the existence conditions.

Nonlinearities are sums of closed-form terms::

    f(x, s, xi) = c_f + sum_i a_i |s|^(r_i - 2) s + sum_j b_j |xi|^gamma_j
    g(x, s)     = c_g + sum_k a_k |s|^(r_k - 2) s

so primitives and the growth/limit hypotheses can be checked exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh import FemSpace
from .musielak import ExponentConfig, WeightField

__all__ = [
    "PowerTerm",
    "GradientTerm",
    "GrowthBounds",
    "NonlinearitySpec",
    "HypothesisError",
    "ConditionReport",
    "signed_pow",
    "evaluate_f",
    "evaluate_g",
    "primitive_F",
    "primitive_G",
    "assemble_A",
    "apply_A",
    "assemble_script_A",
    "apply_script_A",
    "weak_residual",
    "check_conditions",
    "coercivity_lower_bound",
]


class HypothesisError(ValueError):
    """A nonlinearity does not satisfy the growth data it declares."""


def signed_pow(s, r):
    """``|s|^(r-2) s``, continuous at 0 for ``r > 1``."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.abs(s) ** (r - 1.0)


@dataclass(frozen=True)
class PowerTerm:
    """``coeff * |s|^(exponent - 2) s``."""

    coeff: float
    exponent: float

    def __post_init__(self):
        if not self.exponent > 1:
            raise ValueError(f"power exponent must exceed 1, got {self.exponent}")


@dataclass(frozen=True)
class GradientTerm:
    """``coeff * |xi|^exponent``."""

    coeff: float
    exponent: float

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError(f"gradient exponent must be positive, got {self.exponent}")


@dataclass(frozen=True)
class GrowthBounds:
    """Declared constants of the growth and sign hypotheses on f and g.

    ``|f| <= a1 |xi|^(p (r1-1)/r1) + a2 |s|^(r1-1) + alpha1``,
    ``|g| <= a3 |s|^(r2-1) + alpha2``,
    ``f s <= b1 |xi|^p + b2 |s|^p + omega1``, ``g s <= b3 |s|^p + omega2``.
    The ``alpha`` and ``omega`` functions are taken as non-negative constants.
    """

    r1: float
    r2: float
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0
    omega1: float = 0.0
    omega2: float = 0.0

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "alpha1", "alpha2", "b1", "b2", "b3", "omega1", "omega2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class NonlinearitySpec:
    interior: tuple[PowerTerm, ...] = ()
    gradient: tuple[GradientTerm, ...] = ()
    boundary: tuple[PowerTerm, ...] = ()
    f_constant: float = 0.0
    g_constant: float = 0.0
    growth: GrowthBounds | None = None

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(self.interior))
        object.__setattr__(self, "gradient", tuple(self.gradient))
        object.__setattr__(self, "boundary", tuple(self.boundary))

    @property
    def has_gradient(self) -> bool:
        return any(t.coeff != 0 for t in self.gradient)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NonlinearitySpec:
        return cls(
            interior=tuple(PowerTerm(**t) for t in d.get("interior", ())),
            gradient=tuple(GradientTerm(**t) for t in d.get("gradient", ())),
            boundary=tuple(PowerTerm(**t) for t in d.get("boundary", ())),
            f_constant=d.get("f_constant", 0.0),
            g_constant=d.get("g_constant", 0.0),
            growth=GrowthBounds(**d["growth"]) if d.get("growth") else None,
        )

    # -- hypothesis checks -------------------------------------------------
    def growth_violations(self, cfg: ExponentConfig) -> list[str]:
        """Reasons why the declared growth bounds fail; empty when they hold.

        The test is sufficient: each term is bounded by the matching declared
        term, using ``|s|^a <= |s|^b + 1`` for ``a <= b`` and charging the
        ``+1`` to the constant.
        """
        gb = self.growth
        if gb is None:
            return ["no growth bounds declared"]
        out = []
        if not 1 < gb.r1 < cfg.p_star:
            out.append(f"r1={gb.r1} not in (1, p*={cfg.p_star:.6g})")
        if not 1 < gb.r2 < cfg.p_lower_star:
            out.append(f"r2={gb.r2} not in (1, p_*={cfg.p_lower_star:.6g})")
        gamma1 = cfg.p * (gb.r1 - 1.0) / gb.r1
        const_f, const_g = abs(self.f_constant), abs(self.g_constant)
        grad_sum = 0.0
        for t in self.gradient:
            if t.exponent > gamma1 + 1e-14:
                out.append(f"gradient exponent {t.exponent} exceeds p(r1-1)/r1={gamma1:.6g}")
            grad_sum += abs(t.coeff)
            if t.exponent < gamma1 - 1e-14:
                const_f += abs(t.coeff)
        if grad_sum > gb.a1 * (1 + 1e-12):
            out.append(f"gradient coefficients {grad_sum} exceed a1={gb.a1}")
        pow_sum = 0.0
        for t in self.interior:
            if t.exponent > gb.r1 + 1e-14:
                out.append(f"interior exponent {t.exponent} exceeds r1={gb.r1}")
            pow_sum += abs(t.coeff)
            if t.exponent < gb.r1 - 1e-14:
                const_f += abs(t.coeff)
        if pow_sum > gb.a2 * (1 + 1e-12):
            out.append(f"interior coefficients {pow_sum} exceed a2={gb.a2}")
        if const_f > gb.alpha1 * (1 + 1e-12):
            out.append(f"interior constant part {const_f} exceeds alpha1={gb.alpha1}")
        bd_sum = 0.0
        for t in self.boundary:
            if t.exponent > gb.r2 + 1e-14:
                out.append(f"boundary exponent {t.exponent} exceeds r2={gb.r2}")
            bd_sum += abs(t.coeff)
            if t.exponent < gb.r2 - 1e-14:
                const_g += abs(t.coeff)
        if bd_sum > gb.a3 * (1 + 1e-12):
            out.append(f"boundary coefficients {bd_sum} exceed a3={gb.a3}")
        if const_g > gb.alpha2 * (1 + 1e-12):
            out.append(f"boundary constant part {const_g} exceeds alpha2={gb.alpha2}")
        return out

    def sign_condition_violation(self, cfg: ExponentConfig, n: int = 161) -> float:
        """Largest sampled excess of ``f s`` over ``b1|xi|^p + b2|s|^p + omega1``
        (and of ``g s`` over ``b3|s|^p + omega2``), relative to the bound.

        Non-positive means the sign condition held at every sample. The grid
        is logarithmic in ``|s|, |xi|`` over [1e-6, 1e6], both signs of s.
        """
        gb = self.growth
        if gb is None:
            return math.inf
        mag = np.concatenate([[0.0], np.logspace(-6, 6, n)])
        s = np.concatenate([-mag[::-1], mag])
        S, X = np.meshgrid(s, mag, indexing="ij")
        lhs = evaluate_f(self, None, S, X) * S
        rhs = gb.b1 * X ** cfg.p + gb.b2 * np.abs(S) ** cfg.p + gb.omega1
        worst = np.max((lhs - rhs) / np.maximum(1.0, np.abs(rhs)))
        lhs_g = evaluate_g(self, None, s) * s
        rhs_g = gb.b3 * np.abs(s) ** cfg.p + gb.omega2
        return float(max(worst, np.max((lhs_g - rhs_g) / np.maximum(1.0, np.abs(rhs_g)))))

    def validate_growth(self, cfg: ExponentConfig, check_sign: bool = True) -> None:
        """Raise :class:`HypothesisError` unless the declared bounds hold."""
        problems = self.growth_violations(cfg)
        if check_sign and self.growth is not None:
            excess = self.sign_condition_violation(cfg)
            if excess > 1e-12:
                problems.append(f"sign condition violated by relative excess {excess:.3e}")
        if problems:
            raise HypothesisError("; ".join(problems))

    @staticmethod
    def _leading(terms):
        live = [t for t in terms if t.coeff != 0]
        return max(live, key=lambda t: t.exponent) if live else None

    @staticmethod
    def _lowest(terms):
        live = [t for t in terms if t.coeff != 0]
        return min(live, key=lambda t: t.exponent) if live else None

    def f_superlinear(self, q: float) -> bool:
        """``f(s) / (|s|^(q-2) s) -> +inf`` as ``s -> +-inf``."""
        lead = self._leading(self.interior)
        return lead is not None and lead.exponent > q and lead.coeff > 0 and not self.has_gradient

    def g_superlinear(self, q: float) -> bool:
        lead = self._leading(self.boundary)
        return lead is not None and lead.exponent > q and lead.coeff > 0

    def f_small_at_zero(self, r: float) -> bool:
        """``f(s) / (|s|^(r-2) s) -> 0`` as ``s -> 0``."""
        low = self._lowest(self.interior)
        return self.f_constant == 0 and not self.has_gradient and (low is None or low.exponent > r)

    def g_small_at_zero(self, r: float) -> bool:
        low = self._lowest(self.boundary)
        return self.g_constant == 0 and (low is None or low.exponent > r)

    def f_subcritical(self, cfg: ExponentConfig) -> bool:
        return all(t.exponent < cfg.p_star for t in self.interior)

    def g_subcritical(self, cfg: ExponentConfig) -> bool:
        return all(t.exponent < cfg.p_lower_star for t in self.boundary)

    def steklov_hypotheses(self, cfg: ExponentConfig) -> dict[str, bool]:
        """Superlinearity at infinity and the small-s behaviour, Steklov case.

        Power terms are bounded on bounded sets automatically. The
        subcriticality flags are not needed by the existence argument but are
        reported so scenarios stay inside the Sobolev and trace ranges.
        """
        return {
            "bounded_on_bounded_sets": True,
            "f_superlinear": self.f_superlinear(cfg.q),
            "g_superlinear": self.g_superlinear(cfg.q),
            "f_small_at_zero": self.f_small_at_zero(cfg.q),
            "g_small_at_zero": self.g_small_at_zero(cfg.p),
            "f_subcritical": self.f_subcritical(cfg),
            "g_subcritical": self.g_subcritical(cfg),
        }

    def robin_hypotheses(self, cfg: ExponentConfig) -> dict[str, bool]:
        return {
            "bounded_on_bounded_sets": True,
            "f_superlinear": self.f_superlinear(cfg.q),
            "f_small_at_zero": self.f_small_at_zero(cfg.p),
            "f_subcritical": self.f_subcritical(cfg),
        }


def evaluate_f(spec: NonlinearitySpec, x, s, xi=0.0):
    """Interior nonlinearity; ``xi`` may be a gradient array (..., 2) or its norm."""
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, float(spec.f_constant))
    for t in spec.interior:
        out = out + t.coeff * signed_pow(s, t.exponent)
    if spec.gradient:
        xi = np.asarray(xi, dtype=float)
        norm = np.hypot(xi[..., 0], xi[..., 1]) if xi.ndim and xi.shape[-1:] == (2,) else np.abs(xi)
        for t in spec.gradient:
            out = out + t.coeff * norm ** t.exponent
    return out


def evaluate_g(spec: NonlinearitySpec, x, s):
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, float(spec.g_constant))
    for t in spec.boundary:
        out = out + t.coeff * signed_pow(s, t.exponent)
    return out


def primitive_F(spec: NonlinearitySpec, x, s):
    """``int_0^s f(x, t) dt``; only defined without gradient terms."""
    if spec.has_gradient:
        raise ValueError("primitive of a gradient-dependent f is undefined")
    s = np.asarray(s, dtype=float)
    out = spec.f_constant * s
    for t in spec.interior:
        out = out + (t.coeff / t.exponent) * np.abs(s) ** t.exponent
    return out


def primitive_G(spec: NonlinearitySpec, x, s):
    s = np.asarray(s, dtype=float)
    out = spec.g_constant * s
    for t in spec.boundary:
        out = out + (t.coeff / t.exponent) * np.abs(s) ** t.exponent
    return out


def _double_phase_flux(space, u, cfg, mu):
    g = space.gradients(u)
    n = np.hypot(g[:, 0], g[:, 1])
    w = np.zeros_like(n)
    nz = n > 0
    w[nz] = n[nz] ** (cfg.p - 2.0) + mu.per_triangle(space)[nz] * n[nz] ** (cfg.q - 2.0)
    return w[:, None] * g


def assemble_A(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField,
               value_p_coeff: float = 1.0) -> np.ndarray:
    """Pairings ``<A(u), phi_i>`` with every nodal basis function."""
    u = space.check(u)
    v = space.values(u)
    vals = value_p_coeff * signed_pow(v, cfg.p) + mu.at_quadrature(space) * signed_pow(v, cfg.q)
    return space.load_flux(_double_phase_flux(space, u, cfg, mu)) + space.load_values(vals)


def apply_A(space: FemSpace, u, phi, cfg: ExponentConfig, mu: WeightField) -> float:
    """``<A(u), phi>``."""
    return float(np.dot(assemble_A(space, u, cfg, mu), space.check(phi)))


def assemble_script_A(space: FemSpace, u, cfg: ExponentConfig, mu: WeightField,
                      spec: NonlinearitySpec, zeta: float) -> np.ndarray:
    """Pairings of ``A(u) - N_f(u) - N_g(u) + N_zeta(u)`` with the nodal basis.

    Zero vector exactly at discrete weak solutions of the convection problem.
    """
    u = space.check(u)
    out = assemble_A(space, u, cfg, mu)
    grads = np.broadcast_to(space.gradients(u)[:, None, :], space.tri_points.shape)
    out -= space.load_values(evaluate_f(spec, space.tri_points, space.values(u), grads))
    tr = space.traces(u)
    out -= space.load_boundary(evaluate_g(spec, space.edge_points, tr) - zeta * signed_pow(tr, cfg.p))
    return out


def apply_script_A(space: FemSpace, u, phi, cfg: ExponentConfig, mu: WeightField,
                   spec: NonlinearitySpec, zeta: float) -> float:
    return float(np.dot(assemble_script_A(space, u, cfg, mu, spec, zeta), space.check(phi)))


def weak_residual(vector) -> float:
    """Maximum pairing magnitude over the nodal test functions."""
    return float(np.max(np.abs(vector)))


@dataclass(frozen=True)
class ConditionReport:
    lambda_robin: float
    lambda_steklov: float
    b1: float
    b2: float
    b3: float
    beta: float
    zeta: float
    condA_slack_coercive: float     # 1 - b1 - b2 / lambda_R
    condA_slack_boundary: float     # zeta - b2 beta / lambda_R - b3
    condB_slack: float              # 1 - max(b1, b2) - b3 / lambda_S
    robin_alt_slack: float | None = None  # (beta + zeta) ||u_R||^p_{p,bd} - lambda_R - theta
    notes: dict = field(default_factory=dict)

    @property
    def condA(self) -> bool:
        return self.condA_slack_coercive > 0 and self.condA_slack_boundary > 0

    @property
    def condB(self) -> bool:
        return self.condB_slack > 0 and self.zeta >= 0

    @property
    def robin_alt(self) -> bool | None:
        return None if self.robin_alt_slack is None else self.robin_alt_slack > 0

    def negative_slacks(self) -> list[str]:
        names = []
        if self.condA_slack_coercive <= 0:
            names.append(f"(A) 1 - b1 - b2/lambda_R = {self.condA_slack_coercive:.6g}")
        if self.condA_slack_boundary <= 0:
            names.append(f"(A) zeta - b2*beta/lambda_R - b3 = {self.condA_slack_boundary:.6g}")
        if self.condB_slack <= 0:
            names.append(f"(B) 1 - max(b1, b2) - b3/lambda_S = {self.condB_slack:.6g}")
        if self.zeta < 0:
            names.append(f"(B) zeta = {self.zeta:.6g} < 0")
        return names

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(condA=self.condA, condB=self.condB, robin_alt=self.robin_alt)
        return d


def check_conditions(b1: float, b2: float, b3: float, beta: float, zeta: float,
                     lambda_robin: float, lambda_steklov: float, theta: float | None = None,
                     boundary_norm_term: float | None = None) -> ConditionReport:
    """Evaluate conditions (A), (B) and the Robin alternative with explicit slacks.

    ``boundary_norm_term`` is ``||u_R||^p_{p, boundary}`` of the Robin
    eigenfunction normalized in ``L^p``; the alternative condition is only
    evaluated when it and ``theta`` are given.
    """
    if not (lambda_robin > 0 and lambda_steklov > 0):
        raise ValueError("eigenvalues must be positive")
    robin_alt = None
    if boundary_norm_term is not None and theta is not None:
        robin_alt = (beta + zeta) * boundary_norm_term - lambda_robin - theta
    return ConditionReport(
        lambda_robin, lambda_steklov, b1, b2, b3, beta, zeta,
        condA_slack_coercive=1.0 - b1 - b2 / lambda_robin,
        condA_slack_boundary=zeta - b2 * beta / lambda_robin - b3,
        condB_slack=1.0 - max(b1, b2) - b3 / lambda_steklov,
        robin_alt_slack=robin_alt,
    )


def coercivity_lower_bound(report: ConditionReport, case: str, norm0: float, p: float,
                           growth: GrowthBounds, space: FemSpace) -> float:
    """``slack ||u||_0^p - ||omega1||_1 - ||omega2||_{1, boundary}`` for case "A" or "B"."""
    slack = {"A": report.condA_slack_coercive, "B": report.condB_slack}[case]
    return slack * norm0 ** p - growth.omega1 * space.measure - growth.omega2 * space.perimeter
