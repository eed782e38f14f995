import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doublephase.eigen import dense_first_eigenvalue
from doublephase.mesh import FemSpace, build_unit_square_mesh
from doublephase.musielak import ExponentConfig, WeightField, luxemburg_norm, modular_full
from doublephase.operators import (
    GradientTerm,
    GrowthBounds,
    HypothesisError,
    NonlinearitySpec,
    PowerTerm,
    apply_A,
    apply_script_A,
    assemble_A,
    assemble_script_A,
    check_conditions,
    coercivity_lower_bound,
    evaluate_f,
    evaluate_g,
    primitive_F,
    primitive_G,
    signed_pow,
)

CFG = ExponentConfig(1.4, 1.8)


def young_spec(p=1.4, grad=0.05, source=0.1):
    # |xi|^(p-1) s <= (p-1)/p |xi|^p + 1/p |s|^p
    gb = GrowthBounds(r1=p, r2=p, a1=grad, a2=0.0, a3=0.0, alpha1=source,
                      b1=grad * (p - 1) / p, b2=grad / p + source, omega1=source)
    return NonlinearitySpec(gradient=(GradientTerm(grad, p - 1),), f_constant=source, growth=gb)


class TestTerms:
    def test_exponent_guards(self):
        with pytest.raises(ValueError):
            PowerTerm(1.0, 1.0)
        with pytest.raises(ValueError):
            GradientTerm(1.0, 0.0)
        with pytest.raises(ValueError):
            GrowthBounds(r1=1.5, r2=1.5, omega1=-1.0)

    @given(st.floats(-1e3, 1e3), st.floats(1.01, 5.0))
    def test_signed_pow_odd(self, s, r):
        assert signed_pow(-s, r) == -signed_pow(s, r)
        assert signed_pow(s, r) * s >= 0

    def test_signed_pow_values(self):
        assert np.allclose(signed_pow([-8.0, 0.0, 4.0], 2.5), [-8 ** 1.5, 0.0, 8.0])

    def test_evaluate_examples(self):
        spec = NonlinearitySpec(interior=(PowerTerm(2.0, 3.0),), gradient=(GradientTerm(0.5, 1.0),),
                                boundary=(PowerTerm(1.0, 2.0),), f_constant=1.0, g_constant=-1.0)
        assert evaluate_f(spec, None, -2.0, 3.0) == pytest.approx(1 - 8 + 1.5)
        assert evaluate_f(spec, None, 2.0, np.array([3.0, 4.0])) == pytest.approx(1 + 8 + 2.5)
        assert evaluate_g(spec, None, 3.0) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            primitive_F(spec, None, 1.0)

    @given(st.floats(0.01, 20), st.sampled_from([-1.0, 1.0]))
    @settings(max_examples=50)
    def test_primitives_differentiate_back(self, mag, sgn):
        # away from the kink of |s|^0.5 at zero
        s = sgn * mag
        spec = NonlinearitySpec(interior=(PowerTerm(1.0, 2.5), PowerTerm(-0.3, 1.5)),
                                boundary=(PowerTerm(2.0, 2.2),), f_constant=0.4, g_constant=-0.2)
        h = 1e-5
        dF = (primitive_F(spec, None, s + h) - primitive_F(spec, None, s - h)) / (2 * h)
        dG = (primitive_G(spec, None, s + h) - primitive_G(spec, None, s - h)) / (2 * h)
        assert dF == pytest.approx(evaluate_f(spec, None, s), rel=1e-5, abs=1e-5)
        assert dG == pytest.approx(evaluate_g(spec, None, s), rel=1e-5, abs=1e-5)

    def test_dict_round_trip(self):
        spec = young_spec()
        assert NonlinearitySpec.from_dict(spec.to_dict()) == spec


class TestHypotheses:
    def test_young_spec_accepted(self):
        young_spec().validate_growth(CFG)

    def test_gradient_exponent_too_large(self):
        spec = NonlinearitySpec(gradient=(GradientTerm(0.1, 1.0),),
                                growth=GrowthBounds(r1=1.4, r2=1.4, a1=1.0, b1=1.0, b2=1.0))
        with pytest.raises(HypothesisError, match="gradient exponent"):
            spec.validate_growth(CFG)

    def test_coefficient_above_declared(self):
        spec = NonlinearitySpec(interior=(PowerTerm(2.0, 1.4),),
                                growth=GrowthBounds(r1=1.4, r2=1.4, a2=1.0, b2=5.0))
        assert any("a2" in v for v in spec.growth_violations(CFG))

    def test_sign_condition_sampled(self):
        gb = GrowthBounds(r1=1.4, r2=1.4, a2=1.0, b2=0.5)
        spec = NonlinearitySpec(interior=(PowerTerm(1.0, 1.4),), growth=gb)
        assert spec.sign_condition_violation(CFG) > 0
        with pytest.raises(HypothesisError, match="sign condition"):
            spec.validate_growth(CFG)
        ok = NonlinearitySpec(interior=(PowerTerm(1.0, 1.4),), growth=GrowthBounds(r1=1.4, r2=1.4, a2=1.0, b2=1.0))
        assert ok.sign_condition_violation(CFG) <= 1e-12

    def test_supercritical_r1(self):
        spec = NonlinearitySpec(growth=GrowthBounds(r1=CFG.p_star + 0.1, r2=1.4))
        assert any("r1" in v for v in spec.growth_violations(CFG))

    def test_missing_growth(self):
        with pytest.raises(HypothesisError):
            NonlinearitySpec().validate_growth(CFG)

    def test_flags(self):
        spec = NonlinearitySpec(interior=(PowerTerm(1.0, 2.5),), boundary=(PowerTerm(1.0, 2.0),))
        flags = spec.steklov_hypotheses(CFG)
        assert all(flags.values())
        assert spec.robin_hypotheses(CFG)["f_superlinear"]
        weak = NonlinearitySpec(interior=(PowerTerm(1.0, 1.6),), f_constant=0.1)
        assert not weak.f_superlinear(CFG.q)
        assert not weak.f_small_at_zero(CFG.p)
        neg = NonlinearitySpec(interior=(PowerTerm(-1.0, 2.5),))
        assert not neg.f_superlinear(CFG.q)
        assert not NonlinearitySpec(interior=(PowerTerm(1.0, 2.5),), gradient=(GradientTerm(1.0, 0.2),)).f_superlinear(1.8)


class TestOperatorA:
    def test_pairing_with_u_is_modular(self, space8, mu8, rng):
        for _ in range(5):
            u = rng.standard_normal(space8.n_dofs)
            assert apply_A(space8, u, u, CFG, mu8) == pytest.approx(modular_full(space8, u, CFG, mu8).total, rel=1e-12)

    def test_strictly_monotone(self, space8, mu8, rng):
        for _ in range(20):
            u, v = rng.standard_normal((2, space8.n_dofs))
            d = assemble_A(space8, u, CFG, mu8) - assemble_A(space8, v, CFG, mu8)
            assert d @ (u - v) > 0

    def test_is_gradient_of_energy(self, space8, mu8, rng):
        # derivative of 1/p |.|^p + mu/q |.|^q terms along a direction
        u, phi = rng.standard_normal((2, space8.n_dofs))

        def energy(w):
            m = modular_full(space8, w, CFG, mu8)
            return (m.gradient_p_term + m.value_p_term) / CFG.p + (m.gradient_q_term + m.value_q_term) / CFG.q

        h = 1e-6
        fd = (energy(u + h * phi) - energy(u - h * phi)) / (2 * h)
        assert apply_A(space8, u, phi, CFG, mu8) == pytest.approx(fd, rel=1e-6)

    def test_coercive_growth(self, space8, mu8, rng):
        u = rng.standard_normal(space8.n_dofs)
        ratios = []
        for t in (1.0, 10.0, 100.0, 1000.0):
            w = t * u
            ratios.append(apply_A(space8, w, w, CFG, mu8) / luxemburg_norm(space8, w, CFG, mu8))
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_zero(self, space8, mu8):
        assert np.all(assemble_A(space8, np.zeros(space8.n_dofs), CFG, mu8) == 0)


class TestScriptA:
    def test_reduces_to_A(self, space8, mu8, rng):
        u = rng.standard_normal(space8.n_dofs)
        a = assemble_script_A(space8, u, CFG, mu8, NonlinearitySpec(), 0.0)
        assert np.allclose(a, assemble_A(space8, u, CFG, mu8), rtol=0, atol=1e-15)

    def test_pairing_decomposes(self, space8, mu8, rng):
        spec = young_spec()
        u = rng.standard_normal(space8.n_dofs)
        zeta = 0.7
        lhs = apply_script_A(space8, u, u, CFG, mu8, spec, zeta)
        grads = np.broadcast_to(space8.gradients(u)[:, None, :], space8.tri_points.shape)
        fu = space8.integrate(evaluate_f(spec, None, space8.values(u), grads) * space8.values(u))
        tr = space8.traces(u)
        bd = space8.integrate_boundary(zeta * np.abs(tr) ** CFG.p)
        rhs = modular_full(space8, u, CFG, mu8).total - fu + bd
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_constant_source_solution_residual_sign(self, space8, mu8):
        # with f = c > 0 the zero function pairs to -c * int phi_i < 0
        spec = NonlinearitySpec(f_constant=0.5)
        r = assemble_script_A(space8, np.zeros(space8.n_dofs), CFG, mu8, spec, 1.0)
        assert np.all(r < 0)
        assert r.sum() == pytest.approx(-0.5)


class TestConditions:
    def test_example_values(self):
        rep = check_conditions(0.3, 0.3, 0.1, 1.0, 2.0, 3.0, 0.5)
        assert rep.condA_slack_coercive == pytest.approx(0.6)
        assert rep.condA_slack_boundary == pytest.approx(2.0 - 0.1 - 0.1)
        assert rep.condB_slack == pytest.approx(0.7 - 0.2)
        assert rep.condA and rep.condB and rep.robin_alt is None

    def test_with_mesh_eigenvalues(self):
        mesh = build_unit_square_mesh(16)
        lam_r = dense_first_eigenvalue(mesh, "robin", 1.0)
        lam_s = dense_first_eigenvalue(mesh, "steklov")
        rep = check_conditions(0.3, 0.3, 0.1, 1.0, 2.0, lam_r, lam_s)
        assert rep.condA and rep.condB
        assert rep.condA_slack_coercive == pytest.approx(0.7 - 0.3 / lam_r)

    def test_failures_named(self):
        rep = check_conditions(0.9, 0.9, 1.0, 1.0, -0.5, 1.0, 0.5)
        assert not rep.condA and not rep.condB
        names = rep.negative_slacks()
        assert len(names) == 4 and any("zeta" in n for n in names)

    def test_robin_alternative(self):
        rep = check_conditions(0.1, 0.1, 0.1, 1.0, 0.5, 2.0, 0.5, theta=0.5, boundary_norm_term=3.0)
        assert rep.robin_alt_slack == pytest.approx(1.5 * 3.0 - 2.0 - 0.5)
        assert rep.robin_alt

    def test_rejects_nonpositive_eigenvalues(self):
        with pytest.raises(ValueError):
            check_conditions(0, 0, 0, 1, 1, 0.0, 1.0)

    def test_dict_has_flags(self):
        d = check_conditions(0.3, 0.3, 0.1, 1.0, 2.0, 3.0, 0.5).to_dict()
        assert d["condA"] is True and "condB_slack" in d

    def test_coercivity_bound_below_pairing(self, space8, mu8, rng):
        # certified lower bound for <script A(u), u> on random and scaled fields
        spec = young_spec()
        lam_r = dense_first_eigenvalue(space8.mesh, "robin", 1.0)
        lam_s = dense_first_eigenvalue(space8.mesh, "steklov")
        gb = spec.growth
        rep = check_conditions(gb.b1, gb.b2, gb.b3, 1.0, 1.0, lam_r, lam_s)
        assert rep.condB
        for t in (0.1, 1.0, 10.0):
            u = t * rng.standard_normal(space8.n_dofs)
            n0 = luxemburg_norm(space8, u, CFG, mu8)
            lb = coercivity_lower_bound(rep, "B", n0, CFG.p, gb, space8)
            if n0 >= 1:
                assert apply_script_A(space8, u, u, CFG, mu8, spec, 1.0) >= lb
        assert math.isfinite(lb)
