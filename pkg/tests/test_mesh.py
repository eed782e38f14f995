import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from doublephase.mesh import (
    FemFunction,
    FemSpace,
    IntegrandError,
    Mesh,
    MeshError,
    QuadratureRule,
    build_unit_square_mesh,
    integrate_boundary,
    integrate_interior,
    neg_part,
    pos_part,
    read_mesh,
    write_mesh,
)


class TestUnitSquareMesh:
    @pytest.mark.parametrize("n, tris, verts, edges", [(1, 2, 4, 4), (2, 8, 9, 8), (5, 50, 36, 20)])
    def test_counts(self, n, tris, verts, edges):
        m = build_unit_square_mesh(n)
        assert (m.n_triangles, m.n_vertices, m.n_boundary_edges) == (tris, verts, edges)

    def test_area_partition(self):
        m = build_unit_square_mesh(16)
        assert abs(m.signed_areas().sum() - 1.0) < 1e-12
        assert np.all(m.signed_areas() > 0)

    @pytest.mark.parametrize("bad", [0, -1, 2.5])
    def test_rejects_bad_n(self, bad):
        with pytest.raises(MeshError):
            build_unit_square_mesh(bad)

    def test_normals_point_outward(self):
        m = build_unit_square_mesh(6)
        assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0)
        mid = m.vertices[m.boundary_edges].mean(axis=1)
        # outward on the unit square means moving away from the centre
        assert np.all(np.einsum("ij,ij->i", m.normals, mid - 0.5) > 0)

    def test_boundary_is_closed_loop(self):
        m = build_unit_square_mesh(3)
        e = m.boundary_edges
        assert np.array_equal(e[1:, 0], e[:-1, 1])
        assert e[-1, 1] == e[0, 0]

    def test_rejects_clockwise_triangle(self):
        v = np.array([[0, 0], [1, 0], [0, 1.0]])
        with pytest.raises(MeshError):
            Mesh(v, np.array([[0, 2, 1]]), np.array([[0, 1], [1, 2], [2, 0]]))

    def test_arrays_read_only(self):
        m = build_unit_square_mesh(2)
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0

    def test_text_round_trip(self, tmp_path):
        m = build_unit_square_mesh(3)
        write_mesh(m, tmp_path / "m.txt")
        m2 = read_mesh(tmp_path / "m.txt")
        assert np.array_equal(m.vertices, m2.vertices)
        assert np.array_equal(m.triangles, m2.triangles)
        assert np.array_equal(m.boundary_edges, m2.boundary_edges)

    def test_read_mesh_reports_line(self, tmp_path):
        (tmp_path / "bad.txt").write_text("v 0 0\nv 1 x\n")
        with pytest.raises(MeshError, match=":2:"):
            read_mesh(tmp_path / "bad.txt")


class TestQuadrature:
    def test_weights_sum_to_reference_measure(self):
        q = QuadratureRule(8)
        assert np.all(q.tri_weights > 0) and np.all(q.edge_weights > 0)
        assert abs(q.tri_weights.sum() - 0.5) < 1e-15
        assert abs(q.edge_weights.sum() - 1.0) < 1e-15

    @pytest.mark.parametrize("order", [2, 5, 8])
    def test_monomials_exact(self, order):
        from math import factorial

        q = QuadratureRule(order)
        x, y = q.tri_points[:, 0], q.tri_points[:, 1]
        for a in range(order + 1):
            for b in range(order + 1 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert abs(np.dot(q.tri_weights, x ** a * y ** b) - exact) < 1e-14
            t = q.edge_points
            assert abs(np.dot(q.edge_weights, t ** a) - 1.0 / (a + 1)) < 1e-14


class TestIntegration:
    def test_constant_one(self, space8):
        u = np.zeros(space8.n_dofs)
        assert abs(integrate_interior(lambda x, v, g: np.ones_like(v), u, space8) - 1.0) < 1e-13
        assert abs(integrate_boundary(lambda x, t: np.ones_like(t), u, space8) - 4.0) < 1e-13

    def test_unit_gradient(self, space8):
        u = space8.interpolate(lambda x, y: x)
        val = integrate_interior(lambda x, v, g: (g ** 2).sum(-1), u, space8)
        assert abs(val - 1.0) < 1e-13

    def test_constant_power(self, space8):
        u = np.full(space8.n_dofs, 0.7)
        p = 1.37
        assert abs(integrate_interior(lambda x, v, g: np.abs(v) ** p, u, space8) - 0.7 ** p) < 1e-13
        assert abs(integrate_boundary(lambda x, t: np.abs(t) ** p, u, space8) - 4 * 0.7 ** p) < 1e-13

    def test_boundary_of_x1(self, space8):
        u = space8.interpolate(lambda x, y: x)
        assert abs(integrate_boundary(lambda x, t: t, u, space8) - 2.0) < 1e-13

    def test_nonfinite_names_triangle(self, space4):
        u = np.zeros(space4.n_dofs)

        def h(x, v, g):
            out = np.ones_like(v)
            out[3, 0] = np.nan
            return out

        with pytest.raises(IntegrandError, match="triangle 3"):
            integrate_interior(h, u, space4)

    def test_nonfinite_names_edge(self, space4):
        u = np.zeros(space4.n_dofs)

        def h(x, t):
            out = np.ones_like(t)
            out[5, 1] = np.inf
            return out

        with pytest.raises(IntegrandError, match="edge 5"):
            integrate_boundary(h, u, space4)

    def test_lumped_boundary_rule(self):
        space = FemSpace(build_unit_square_mesh(4), boundary_rule="lumped")
        u = space.interpolate(lambda x, y: x)
        # trapezoid rule is exact for linear traces
        assert abs(space.integrate_boundary(space.traces(u)) - 2.0) < 1e-13

    def test_refinement_converges(self):
        def err(n):
            s = FemSpace(build_unit_square_mesh(n))
            u = s.interpolate(lambda x, y: np.sin(np.pi * x) * y)
            return abs(s.integrate(np.abs(s.values(u)) ** 1.5) - _fine_reference())

        errs = [err(n) for n in (4, 8, 16)]
        assert errs[1] < errs[0] and errs[2] < errs[1]
        assert np.log2(errs[0] / errs[1]) >= 1 and np.log2(errs[1] / errs[2]) >= 1


def _fine_reference():
    from scipy.integrate import dblquad

    return dblquad(lambda y, x: (np.sin(np.pi * x) * y) ** 1.5, 0, 1, 0, 1, epsabs=1e-13)[0]


class TestParts:
    def test_example(self):
        u = np.array([1.0, -2.0, 0.0])
        assert np.array_equal(pos_part(u), [1, 0, 0])
        assert np.array_equal(neg_part(u), [0, 2, 0])

    def test_nonnegative_has_no_negative_part(self):
        assert np.all(neg_part(np.array([0.0, 3.0, 1e-300])) == 0)

    @given(arrays(np.float64, 25, elements=st.floats(-1e6, 1e6)))
    @settings(max_examples=50, deadline=None)
    def test_lattice_identities(self, u):
        assert np.array_equal(pos_part(u) - neg_part(u), u)
        assert np.array_equal(pos_part(u) + neg_part(u), np.abs(u))

    def test_fem_function(self, space4):
        c = np.linspace(-1, 1, space4.n_dofs)
        f = FemFunction(space4, c)
        assert np.array_equal(np.asarray(f), c)
        assert np.array_equal(f.pos().coeffs - f.neg().coeffs, c)
        with pytest.raises(ValueError):
            FemFunction(space4, c[:-1])
        bad = c.copy()
        bad[0] = np.nan
        with pytest.raises(ValueError):
            FemFunction(space4, bad)
