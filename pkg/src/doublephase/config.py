"""Scenario files: flat ``key = value`` lines with typed validation.

Example::

    theorem = T41
    mesh.n = 16
    p = 1.4
    q = 1.8
    mu = linear_x1
    f.power = 1.0:2.5          # coefficient:exponent, comma separated
    g.power = 1.0:2.0
    zeta.margin = 0.5
    theta = 1

Lists of terms use ``coefficient:exponent`` pairs. Comments start with ``#``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .mesh import FemSpace
from .musielak import ExponentConfig, WeightField
from .operators import GradientTerm, GrowthBounds, NonlinearitySpec, PowerTerm

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "load_config", "THEOREMS"]

THEOREMS = ("T31", "T41", "T43", "eigen_only", "space_checks")


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class ScenarioConfig:
    theorem: str
    n: int = 16
    p: float = 1.4
    q: float = 1.8
    strict_mode: bool = True
    mu: str = "linear_x1"
    boundary_rule: str = "gauss"
    spec: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    zeta: float | None = None
    zeta_margin: float | None = None
    beta: float = 1.0
    theta: float = 1.0
    allow_theta_above_one: bool = False
    allow_uncertified: bool = False
    gradient_tol: float = 1e-8
    sign_tol: float = 1e-8
    residual_tol: float = 1e-6
    picard_tol: float = 1e-8
    damping: float = 1.0
    max_outer: int = 200
    samples: int = 200
    seed: int = 0

    def exponents(self) -> ExponentConfig:
        return ExponentConfig(self.p, self.q, 2, self.strict_mode)

    def weight(self, space: FemSpace) -> WeightField:
        kind, _, arg = self.mu.partition(":")
        if kind == "constant":
            return WeightField.constant(space, float(arg or 1.0))
        if kind == "linear_x1":
            return WeightField.linear_x1(space, float(arg or 1.0))
        if kind == "vanishing_half_plane":
            return WeightField.vanishing_half_plane(space, float(arg or 1.0))
        raise ConfigError(f"mu: unknown weight {self.mu!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["spec"] = self.spec.to_dict()
        return d


_SCALARS = {
    "theorem": ("theorem", str),
    "mesh.n": ("n", int),
    "p": ("p", float),
    "q": ("q", float),
    "strict_mode": ("strict_mode", bool),
    "mu": ("mu", str),
    "boundary_rule": ("boundary_rule", str),
    "zeta": ("zeta", float),
    "zeta.margin": ("zeta_margin", float),
    "beta": ("beta", float),
    "theta": ("theta", float),
    "allow_theta_above_one": ("allow_theta_above_one", bool),
    "allow_uncertified": ("allow_uncertified", bool),
    "tol.gradient": ("gradient_tol", float),
    "tol.sign": ("sign_tol", float),
    "tol.residual": ("residual_tol", float),
    "tol.picard": ("picard_tol", float),
    "damping": ("damping", float),
    "max_outer": ("max_outer", int),
    "samples": ("samples", int),
    "seed": ("seed", int),
}
_SPEC_KEYS = ("f.power", "f.gradient", "f.constant", "g.power", "g.constant")
_GROWTH_KEYS = tuple(f"growth.{f.name}" for f in fields(GrowthBounds))


def _convert(key, raw, kind):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            x = float(raw)
            if not math.isfinite(x):
                raise ValueError(raw)
            return x
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def _terms(key, raw, cls):
    out = []
    for item in filter(None, (t.strip() for t in raw.split(","))):
        coeff, sep, expo = item.partition(":")
        if not sep:
            raise ConfigError(f"{key}: term {item!r} is not coefficient:exponent")
        try:
            out.append(cls(_convert(key, coeff, float), _convert(key, expo, float)))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return tuple(out)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate scenario text."""
    values, spec_raw, growth_raw = {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key in _SCALARS:
            name, kind = _SCALARS[key]
            if name in values:
                raise ConfigError(f"{key}: given twice")
            values[name] = _convert(key, raw, kind)
        elif key in _SPEC_KEYS:
            spec_raw[key] = raw
        elif key in _GROWTH_KEYS:
            growth_raw[key.split(".", 1)[1]] = _convert(key, raw, float)
        else:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
    if "theorem" not in values:
        raise ConfigError("theorem: missing")
    growth = None
    if growth_raw:
        for req in ("r1", "r2"):
            if req not in growth_raw:
                raise ConfigError(f"growth.{req}: missing")
        try:
            growth = GrowthBounds(**growth_raw)
        except ValueError as exc:
            raise ConfigError(f"growth: {exc}") from None
    spec = NonlinearitySpec(
        interior=_terms("f.power", spec_raw.get("f.power", ""), PowerTerm),
        gradient=_terms("f.gradient", spec_raw.get("f.gradient", ""), GradientTerm),
        boundary=_terms("g.power", spec_raw.get("g.power", ""), PowerTerm),
        f_constant=_convert("f.constant", spec_raw.get("f.constant", "0"), float),
        g_constant=_convert("g.constant", spec_raw.get("g.constant", "0"), float),
        growth=growth,
    )
    cfg = ScenarioConfig(spec=spec, **values)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    t = cfg.theorem
    if t not in THEOREMS:
        raise ConfigError(f"theorem: must be one of {', '.join(THEOREMS)}, got {t!r}")
    if not 1 <= cfg.n <= 256:
        raise ConfigError(f"mesh.n: must lie in [1, 256], got {cfg.n}")
    if cfg.boundary_rule not in ("gauss", "lumped"):
        raise ConfigError(f"boundary_rule: must be gauss or lumped, got {cfg.boundary_rule!r}")
    if not cfg.p > 1:
        raise ConfigError(f"p: must exceed 1, got {cfg.p}")
    if cfg.mu.partition(":")[0] not in ("constant", "linear_x1", "vanishing_half_plane"):
        raise ConfigError(f"mu: unknown weight {cfg.mu!r}")
    if not cfg.beta > 0:
        raise ConfigError(f"beta: must be positive, got {cfg.beta}")
    if cfg.samples < 1:
        raise ConfigError("samples: must be positive")
    if not 0 < cfg.damping <= 1:
        raise ConfigError(f"damping: must lie in (0, 1], got {cfg.damping}")
    if t == "eigen_only":
        return
    try:
        cfg.exponents()
    except ValueError as exc:
        raise ConfigError(f"p, q: {exc}") from None
    if t == "T41":
        if not (0 < cfg.theta <= 1 or (cfg.theta > 0 and cfg.allow_theta_above_one)):
            raise ConfigError(f"theta: T41 needs theta in (0, 1], got {cfg.theta}")
    if t == "T43" and not cfg.theta > 0:
        raise ConfigError(f"theta: T43 needs theta > 0, got {cfg.theta}")
    if t in ("T41", "T43"):
        if (cfg.zeta is None) == (cfg.zeta_margin is None):
            raise ConfigError("zeta, zeta.margin: give exactly one of them")
        if not cfg.spec.interior:
            raise ConfigError("f.power: T41/T43 need at least one interior power term")
        if cfg.spec.gradient:
            raise ConfigError("f.gradient: not allowed without a convection term")
        if t == "T41" and not cfg.spec.boundary:
            raise ConfigError("g.power: T41 needs at least one boundary power term")
    if t == "T31":
        if cfg.spec.growth is None:
            raise ConfigError("growth: T31 requires growth metadata")
        if cfg.zeta is None:
            raise ConfigError("zeta: T31 requires zeta")
        if cfg.zeta_margin is not None:
            raise ConfigError("zeta.margin: not used by T31")


def load_config(path) -> tuple[ScenarioConfig, str]:
    text = Path(path).read_text()
    return parse_config(text), text
