"""Acceptance criteria as callable checks, shared by the CLI and the test suite.

Every criterion returns a :class:`CriterionResult`; ``passed`` includes the
runtime limit where one is stated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .mesh import FemSpace, build_unit_square_mesh

__all__ = [
    "CriterionResult",
    "random_fields",
    "modular_norm_suite",
    "steklov_spec",
    "convection_spec",
    "central_difference_check",
    "CRITERIA",
    "run_suite",
]


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    limit: float | None

    def line(self) -> str:
        lim = "" if self.limit is None else f" (limit {self.limit:.0f} s)"
        return (f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.title}"
                f" -- {self.detail}; {self.seconds:.2f} s{lim}")


def random_fields(rng: np.random.Generator, n_dofs: int, count: int):
    """Random nodal vectors spanning three decades of amplitude."""
    for _ in range(count):
        scale = 10.0 ** rng.uniform(-2.0, 1.0)
        yield scale * (rng.standard_normal(n_dofs) + rng.uniform(-1, 1))


def modular_norm_suite(space: FemSpace, cfg, mu, count: int, seed: int = 0):
    from .musielak import check_modular_norm_relations

    rng = np.random.default_rng(seed)
    return [check_modular_norm_relations(space, u, cfg, mu, slack=1e-9, unit_tol=1e-10)
            for u in random_fields(rng, space.n_dofs, count)]


def steklov_spec(r: float = 2.5, r2: float = 2.0):
    from .operators import NonlinearitySpec, PowerTerm

    return NonlinearitySpec(interior=(PowerTerm(1.0, r),), boundary=(PowerTerm(1.0, r2),))


def convection_spec(p: float, grad_coeff: float = 0.05, source: float = 0.1):
    """``f = source + grad_coeff |xi|^(p-1)``, ``g = 0``, with bounds from Young's inequality.

    Taking ``r1 = p`` makes the admissible gradient exponent ``p (r1-1)/r1 = p - 1``.
    Young gives ``c |xi|^(p-1) |s| <= c/p' |xi|^p + c/p |s|^p`` and
    ``source |s| <= source/p |s|^p + source/p'``.
    """
    from .operators import GradientTerm, GrowthBounds, NonlinearitySpec

    pc = p / (p - 1.0)
    gb = GrowthBounds(r1=p, r2=p, a1=grad_coeff, alpha1=source, b1=grad_coeff / pc,
                      b2=(grad_coeff + source) / p, omega1=source / pc)
    return NonlinearitySpec(gradient=(GradientTerm(grad_coeff, p - 1.0),), f_constant=source,
                            growth=gb)


def central_difference_check(fun_grad, points, rng, h: float = 1e-6):
    """Largest relative gap between analytic and central-difference directional derivatives."""
    worst = 0.0
    for u in points:
        d = rng.standard_normal(len(u))
        _, g = fun_grad(u)
        analytic = float(np.dot(g, d))
        fd = (fun_grad(u + h * d)[0] - fun_grad(u - h * d)[0]) / (2 * h)
        worst = max(worst, abs(fd - analytic) / max(abs(analytic), abs(fd), 1e-300))
    return worst


# -- criteria ---------------------------------------------------------------

def _criterion_1():
    from .musielak import ExponentConfig, WeightField

    space = FemSpace(build_unit_square_mesh(8))
    cfg = ExponentConfig(1.4, 1.8)
    reps = modular_norm_suite(space, cfg, WeightField.linear_x1(space), 200, seed=1)
    bad = [k for k, r in enumerate(reps) if not r.ok]
    below = sum(r.norm0 < 1 for r in reps)
    worst_unit = max(abs(r.unit_modular - 1) for r in reps)
    return not bad, (f"{200 - len(bad)}/200 pass ({below} with norm < 1), "
                     f"max |rho(u/||u||) - 1| = {worst_unit:.1e}")


def _criterion_2():
    from .eigen import dense_first_eigenvalue, robin_first_eigenpair, steklov_first_eigenpair

    mesh = build_unit_square_mesh(16)
    space = FemSpace(mesh, boundary_rule="lumped")
    ok, parts = True, []
    for kind, beta in (("robin", 1.0), ("robin", 100.0), ("steklov", None)):
        res = (robin_first_eigenpair(space, 2.0, beta) if kind == "robin"
               else steklov_first_eigenpair(space, 2.0))
        ref = dense_first_eigenvalue(mesh, kind, beta or 1.0, lumped_boundary=True)
        rel = abs(res.lam - ref) / ref
        ok &= rel <= 1e-6 and res.positive
        tag = kind if beta is None else f"robin b={beta:g}"
        parts.append(f"{tag}: rel {rel:.1e}, min {res.eigenfunction.coeffs.min():.2e}")
    return ok, "; ".join(parts)


def _criterion_3():
    from .eigen import (boundary_lp_norm_p, gradient_lp_norm_p, lp_norm_p,
                        robin_first_eigenpair, steklov_first_eigenpair)

    space = FemSpace(build_unit_square_mesh(16))
    p, beta = 1.4, 1.0
    er = robin_first_eigenpair(space, p, beta)
    es = steklov_first_eigenpair(space, p)
    lr, ls = er.lam, es.lam
    rng = np.random.default_rng(3)
    # half generic, half small perturbations of the extremals (near equality)
    samples = list(random_fields(rng, space.n_dofs, 50))
    for k in range(50):
        base = (er if k % 2 else es).eigenfunction.coeffs
        samples.append(base + 10.0 ** rng.uniform(-4, -1) * rng.standard_normal(space.n_dofs))
    # excess of lhs over rhs, absolute and relative to rhs; both must stay <= 1e-8
    worst_r = worst_s = np.array([-np.inf, -np.inf])
    for u in samples:
        gp, vp, bp = gradient_lp_norm_p(space, u, p), lp_norm_p(space, u, p), boundary_lp_norm_p(space, u, p)
        rhs_r = (gp + beta * bp) / lr
        rhs_s = (gp + vp) / ls
        worst_r = np.maximum(worst_r, [vp - rhs_r, (vp - rhs_r) / rhs_r])
        worst_s = np.maximum(worst_s, [bp - rhs_s, (bp - rhs_s) / rhs_s])
    ok = bool(np.all(worst_r <= 1e-8) and np.all(worst_s <= 1e-8))
    return ok, (f"largest excess Robin {worst_r[0]:.2e} (rel {worst_r[1]:.2e}), "
                f"Steklov {worst_s[0]:.2e} (rel {worst_s[1]:.2e})")


def _criterion_4():
    from .musielak import ExponentConfig, WeightField, modular_full
    from .operators import assemble_A

    space = FemSpace(build_unit_square_mesh(8))
    cfg = ExponentConfig(1.4, 1.8)
    mu = WeightField.linear_x1(space)
    rng = np.random.default_rng(4)
    worst_eq = 0.0
    for u in random_fields(rng, space.n_dofs, 100):
        rho = modular_full(space, u, cfg, mu).total
        worst_eq = max(worst_eq, abs(np.dot(assemble_A(space, u, cfg, mu), u) - rho) / rho)
    worst_mono = np.inf
    us = list(random_fields(rng, space.n_dofs, 100))
    vs = list(random_fields(rng, space.n_dofs, 100))
    for u, v in zip(us, vs):
        val = np.dot(assemble_A(space, u, cfg, mu) - assemble_A(space, v, cfg, mu), u - v)
        worst_mono = min(worst_mono, val)
    ok = worst_eq <= 1e-12 and worst_mono >= -1e-12
    return ok, f"max rel |<A(u),u> - rho(u)| = {worst_eq:.1e}; min monotonicity pairing {worst_mono:.3e}"


def _constant_sign_run(kind):
    from .eigen import robin_first_eigenpair, steklov_first_eigenpair
    from .musielak import ExponentConfig, WeightField
    from .variational import make_truncation, minimize_energy, verify_constant_sign

    space = FemSpace(build_unit_square_mesh(16))
    cfg = ExponentConfig(1.4, 1.8)
    mu = WeightField.linear_x1(space)
    spec = steklov_spec()
    theta, beta = 1.0, 1.0
    hyp = spec.steklov_hypotheses(cfg) if kind == "steklov" else spec.robin_hypotheses(cfg)
    exps_ok = cfg.q < 2.5 < cfg.p_star and cfg.p < 2.0 < cfg.p_lower_star
    if kind == "steklov":
        eig = steklov_first_eigenpair(space, cfg.p)
        zeta = eig.lam + 0.5
    else:
        eig = robin_first_eigenpair(space, cfg.p, beta)
        zeta = eig.lam + theta + 0.5
    T = make_truncation(kind, spec, cfg, zeta, theta, None if kind == "steklov" else beta)
    ok = all(hyp.values()) and exps_ok
    out, sols = [], {}
    for sign in (1, -1):
        u, eb, cert = minimize_energy(space, T, spec, cfg, mu, sign, eig.eigenfunction.coeffs)
        rep = verify_constant_sign(space, u, T, spec, cfg, mu, sign)
        sols[sign] = u.coeffs
        ok &= rep.ok and eb.total < 0
        out.append((sign, eb.total, rep, cert))
    gap = float(np.max(np.abs(sols[1] + sols[-1])))
    return ok, out, gap, T, cert, hyp


def _sign_detail(out, T):
    parts = []
    for sign, e, rep, _ in out:
        parts.append(f"{'u0' if sign > 0 else 'v0'}: E={e:.4g}, range [{rep.min_value:.3g}, "
                     f"{rep.max_value:.3g}], residual {rep.untruncated_residual:.1e}")
    return f"ubar={T.ubar:.4g}; " + "; ".join(parts)


def _criterion_5():
    ok, out, gap, T, _, _ = _constant_sign_run("steklov")
    ok &= gap <= 1e-6
    return ok, _sign_detail(out, T) + f"; symmetry gap {gap:.1e}"


def _criterion_6():
    ok, out, gap, T, _, _ = _constant_sign_run("robin")
    ks = [cert.small_t[0] if cert.small_t else None for _, _, _, cert in out]
    ok &= all(k is not None and k <= 26 for k in ks)
    return ok, _sign_detail(out, T) + f"; small-t k = {ks}"


def _convection_setup(n=16, p=1.5, q=1.8):
    from .eigen import robin_first_eigenpair, steklov_first_eigenpair
    from .musielak import ExponentConfig, WeightField

    space = FemSpace(build_unit_square_mesh(n))
    cfg = ExponentConfig(p, q)
    mu = WeightField.linear_x1(space)
    lr = robin_first_eigenpair(space, p, 1.0).lam
    ls = steklov_first_eigenpair(space, p).lam
    return space, cfg, mu, lr, ls


def _criterion_7():
    from .convection import GateError, solve_convection
    from .operators import check_conditions

    space, cfg, mu, lr, ls = _convection_setup()
    spec = convection_spec(cfg.p)
    spec.validate_growth(cfg)
    gb = spec.growth
    zeta = 0.1
    rep = check_conditions(gb.b1, gb.b2, gb.b3, 1.0, zeta, lr, ls)
    res = solve_convection(space, cfg, mu, spec, zeta, rep)
    step = res.trace[-1].step_norm
    ok = (rep.condA and res.converged and step < 1e-8 and res.residual <= 1e-6
          and res.norm0 > 1e-3 and res.certified)
    bad = convection_spec(cfg.p, grad_coeff=2.0)
    bad.validate_growth(cfg)
    rep_bad = check_conditions(bad.growth.b1, bad.growth.b2, bad.growth.b3, 1.0, zeta, lr, ls)
    try:
        solve_convection(space, cfg, mu, bad, zeta, rep_bad)
        rejected = False
    except GateError:
        rejected = True
    ok &= rejected and not rep_bad.condA and not rep_bad.condB
    return ok, (f"(A) slacks {rep.condA_slack_coercive:.4f}, {rep.condA_slack_boundary:.4f}; "
                f"{len(res.trace)} outer steps, final step {step:.1e}, residual {res.residual:.1e}, "
                f"norm {res.norm0:.3e}; violating set rejected: {rejected}")


def _criterion_8():
    from .convection import frozen_load, inner_functional
    from .musielak import ExponentConfig, WeightField
    from .variational import make_truncation, truncated_functional

    space = FemSpace(build_unit_square_mesh(8))
    cfg = ExponentConfig(1.4, 1.8)
    mu = WeightField.linear_x1(space)
    spec = steklov_spec()
    rng = np.random.default_rng(8)
    worst = {}
    for kind, zeta in (("steklov", 0.75), ("robin", 5.3)):
        T = make_truncation(kind, spec, cfg, zeta, 1.0, None if kind == "steklov" else 1.0)
        for sign in (1, -1):
            fn = truncated_functional(space, T, spec, cfg, mu, sign)
            pts = [rng.uniform(-1.3 * T.ubar, 1.3 * T.ubar, space.n_dofs) for _ in range(20)]
            name = f"{kind} energy ({'plus' if sign > 0 else 'minus'})"
            worst[name] = central_difference_check(fn.value_and_grad, pts, rng)
    ccfg = ExponentConfig(1.5, 1.8)
    cspec = convection_spec(1.5)
    load = frozen_load(space, rng.standard_normal(space.n_dofs), cspec)
    fn = inner_functional(space, ccfg, mu, 0.1, load)
    pts = [s * rng.standard_normal(space.n_dofs) for s in 10.0 ** rng.uniform(-1, 1, 20)]
    worst["inner"] = central_difference_check(fn.value_and_grad, pts, rng)
    ok = all(v <= 1e-5 for v in worst.values())
    return ok, "max relative gap " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def _criterion_9():
    from .musielak import luxemburg_norm
    from .operators import assemble_script_A, check_conditions, coercivity_lower_bound

    space, cfg, mu, lr, ls = _convection_setup(n=8)
    spec = convection_spec(cfg.p)
    gb = spec.growth
    rng = np.random.default_rng(9)
    parts, ok = [], True
    for case, zeta in (("A", 0.1), ("B", 0.0)):
        rep = check_conditions(gb.b1, gb.b2, gb.b3, 1.0, zeta, lr, ls)
        holds = rep.condA if case == "A" else rep.condB
        if case == "B":
            holds = holds and not rep.condA
        worst = np.inf
        for _ in range(50):
            u = rng.standard_normal(space.n_dofs)
            u *= rng.uniform(1.01, 20.0) / luxemburg_norm(space, u, cfg, mu)
            n0 = luxemburg_norm(space, u, cfg, mu)
            lhs = float(np.dot(assemble_script_A(space, u, cfg, mu, spec, zeta), u))
            bound = coercivity_lower_bound(rep, case, n0, cfg.p, gb, space)
            worst = min(worst, (lhs - bound) / max(1.0, abs(lhs)))
        ok &= holds and worst >= -1e-12
        parts.append(f"case {case} (zeta={zeta:g}, report holds: {holds}) min margin {worst:.3e}")
    return ok, "; ".join(parts)


CRITERIA = {
    1: ("modular-norm suite", _criterion_1, 10.0),
    2: ("eigenvalue oracle", _criterion_2, 30.0),
    3: ("Rayleigh inequalities", _criterion_3, 120.0),
    4: ("operator identities and monotonicity", _criterion_4, 120.0),
    5: ("Steklov constant-sign pair", _criterion_5, 60.0),
    6: ("Robin constant-sign pair", _criterion_6, 120.0),
    7: ("convection solve and gate", _criterion_7, 120.0),
    8: ("gradient checks", _criterion_8, 120.0),
    9: ("coercivity certificates", _criterion_9, 120.0),
}


def run_criterion(number: int) -> CriterionResult:
    title, fn, limit = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # report, do not abort the suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    if dt > limit:
        ok, detail = False, detail + f"; runtime {dt:.1f} s over limit"
    return CriterionResult(number, title, bool(ok), detail, dt, limit)


def run_suite(numbers=None, echo=None) -> list[CriterionResult]:
    out = []
    for k in numbers or sorted(CRITERIA):
        res = run_criterion(k)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
