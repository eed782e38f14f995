"""Triangular meshes, P1 finite elements and quadrature on 2-D domains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "Mesh",
    "QuadratureRule",
    "FemSpace",
    "FemFunction",
    "MeshError",
    "IntegrandError",
    "build_unit_square_mesh",
    "read_mesh",
    "write_mesh",
    "integrate_interior",
    "integrate_boundary",
    "pos_part",
    "neg_part",
]

DEFAULT_ORDER = 8


class MeshError(ValueError):
    """Raised for malformed meshes."""


class IntegrandError(ArithmeticError):
    """Raised when an integrand produces a non-finite value."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh with oriented boundary edges.

    Parameters
    ----------
    vertices : (V, 2) array
    triangles : (T, 3) int array, counter-clockwise vertex triples
    boundary_edges : (E, 2) int array
        Vertex pairs on the boundary. Outward unit normals are derived from
        the adjacent triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    normals: np.ndarray = field(init=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError("triangles must have shape (T, 3) with T >= 1")
        if edges.ndim != 2 or edges.shape[1] != 2:
            raise MeshError("boundary_edges must have shape (E, 2)")
        nv = len(vertices)
        if triangles.min() < 0 or triangles.max() >= nv:
            raise MeshError("triangle index out of range")
        if len(edges) and (edges.min() < 0 or edges.max() >= nv):
            raise MeshError("boundary edge index out of range")
        for name, arr in (("vertices", vertices), ("triangles", triangles),
                          ("boundary_edges", edges)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        normals = self._outward_normals()
        normals.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        self._check()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_boundary_edges(self) -> int:
        return len(self.boundary_edges)

    def signed_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def _adjacent_triangles(self) -> np.ndarray:
        owner = {}
        for t, tri in enumerate(self.triangles):
            for k in range(3):
                i, j = tri[k], tri[(k + 1) % 3]
                owner.setdefault((min(i, j), max(i, j)), []).append(t)
        adj = np.empty(len(self.boundary_edges), dtype=np.int64)
        for e, (i, j) in enumerate(self.boundary_edges):
            tris = owner.get((min(i, j), max(i, j)))
            if tris is None:
                raise MeshError(f"boundary edge {e} ({i}, {j}) is not a triangle edge")
            if len(tris) != 1:
                raise MeshError(f"boundary edge {e} ({i}, {j}) is shared by {len(tris)} triangles")
            adj[e] = tris[0]
        return adj

    def _outward_normals(self) -> np.ndarray:
        if len(self.boundary_edges) == 0:
            return np.zeros((0, 2))
        adj = self._adjacent_triangles()
        p0 = self.vertices[self.boundary_edges[:, 0]]
        p1 = self.vertices[self.boundary_edges[:, 1]]
        d = p1 - p0
        n = np.column_stack([d[:, 1], -d[:, 0]])
        n /= np.hypot(n[:, 0], n[:, 1])[:, None]
        centroid = self.vertices[self.triangles[adj]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, centroid - 0.5 * (p0 + p1)) > 0
        n[flip] *= -1.0
        return n

    def _check(self):
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive signed area {areas[bad[0]]:g}")
        if len(self.boundary_edges):
            degree = np.bincount(self.boundary_edges.ravel(), minlength=self.n_vertices)
            on_boundary = degree[degree > 0]
            if np.any(on_boundary != 2):
                raise MeshError("boundary edges do not form closed loops")


def build_unit_square_mesh(n: int) -> Mesh:
    """Structured mesh of (0, 1)^2 with ``2 n^2`` triangles.

    Each of the ``n x n`` cells is split along its lower-left to upper-right
    diagonal. Boundary edges are listed counter-clockwise.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"subdivisions must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(x, x)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n)
    bottom = np.column_stack([idx(k, 0), idx(k + 1, 0)])
    right = np.column_stack([idx(n, k), idx(n, k + 1)])
    top = np.column_stack([idx(n - k, n), idx(n - k - 1, n)])
    left = np.column_stack([idx(0, n - k), idx(0, n - k - 1)])
    edges = np.vstack([bottom, right, top, left])
    return Mesh(vertices, triangles, edges)


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text format: ``v x y``, ``t i j k``, ``b i j`` (0-based)."""
    lines = [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"b {i} {j}" for i, j in mesh.boundary_edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    vertices, triangles, edges = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *vals = line.split()
        try:
            if tag == "v" and len(vals) == 2:
                vertices.append([float(v) for v in vals])
            elif tag == "t" and len(vals) == 3:
                triangles.append([int(v) for v in vals])
            elif tag == "b" and len(vals) == 2:
                edges.append([int(v) for v in vals])
            else:
                raise ValueError
        except ValueError:
            raise MeshError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    return Mesh(np.array(vertices).reshape(-1, 2), np.array(triangles).reshape(-1, 3),
                np.array(edges, dtype=np.int64).reshape(-1, 2))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature on the reference triangle and the reference edge [0, 1].

    The triangle rule is a collapsed (Duffy) Gauss-Jacobi x Gauss-Legendre
    product rule; both rules integrate polynomials of total degree up to
    ``order`` exactly. Triangle weights sum to 1/2, edge weights to 1.
    """

    order: int
    tri_points: np.ndarray = field(init=False, repr=False)
    tri_weights: np.ndarray = field(init=False, repr=False)
    edge_points: np.ndarray = field(init=False, repr=False)
    edge_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 0:
            raise ValueError(f"quadrature order must be a non-negative integer, got {self.order!r}")
        m = max(1, math.ceil((self.order + 1) / 2))
        xj, wj = roots_jacobi(m, 1.0, 0.0)
        xl, wl = roots_legendre(m)
        s = 0.5 * (1.0 + xj)
        ws = 0.25 * wj
        t = 0.5 * (1.0 + xl)
        wt = 0.5 * wl
        xi = np.repeat(s, m)
        eta = np.tile(t, m) * (1.0 - xi)
        object.__setattr__(self, "tri_points", np.column_stack([xi, eta]))
        object.__setattr__(self, "tri_weights", np.outer(ws, wt).ravel())
        object.__setattr__(self, "edge_points", t)
        object.__setattr__(self, "edge_weights", wt)

    @property
    def tri_basis(self) -> np.ndarray:
        """P1 shape functions at triangle points, shape (Q, 3)."""
        xi, eta = self.tri_points.T
        return np.column_stack([1.0 - xi - eta, xi, eta])

    @property
    def edge_basis(self) -> np.ndarray:
        """P1 edge shape functions at edge points, shape (Qe, 2)."""
        t = self.edge_points
        return np.column_stack([1.0 - t, t])


class FemSpace:
    """P1 Lagrange space on a mesh together with a fixed quadrature rule.

    All integrals in the package go through one of these objects, so that
    quantities computed by different routes share the same quadrature.

    Parameters
    ----------
    mesh : Mesh
    order : int
        Exactness degree of the triangle (and Gauss edge) rule.
    boundary_rule : {"gauss", "lumped"}
        ``"lumped"`` integrates boundary terms with the trapezoidal rule,
        which makes the boundary mass matrix diagonal. Robin problems with
        large ``beta`` need this for nodally positive first eigenvectors.
    """

    def __init__(self, mesh: Mesh, order: int = DEFAULT_ORDER, boundary_rule: str = "gauss"):
        if boundary_rule not in ("gauss", "lumped"):
            raise ValueError(f"boundary_rule must be 'gauss' or 'lumped', got {boundary_rule!r}")
        self.mesh = mesh
        self.rule = QuadratureRule(order)
        self.boundary_rule = boundary_rule
        tri = mesh.triangles
        verts = mesh.vertices[tri]                      # (T, 3, 2)
        self.areas = mesh.signed_areas()
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        jac = np.stack([e1, e2], axis=2)                # columns are edges
        inv_jac_t = np.linalg.inv(jac).transpose(0, 2, 1)
        ref_grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        self.basis_gradients = np.einsum("tij,kj->tki", inv_jac_t, ref_grads)  # (T, 3, 2)
        self.tri_basis = self.rule.tri_basis            # (Q, 3)
        self.tri_weights = 2.0 * self.areas[:, None] * self.rule.tri_weights[None, :]
        self.tri_points = np.einsum("qk,tkd->tqd", self.tri_basis, verts)

        edges = mesh.boundary_edges
        self.edge_lengths = mesh.edge_lengths()
        if boundary_rule == "gauss":
            self.edge_basis = self.rule.edge_basis      # (Qe, 2)
            ref_weights = self.rule.edge_weights
        else:
            self.edge_basis = np.eye(2)
            ref_weights = np.array([0.5, 0.5])
        self.edge_weights = self.edge_lengths[:, None] * ref_weights[None, :]
        self.edge_points = np.einsum("qk,ekd->eqd", self.edge_basis, mesh.vertices[edges])

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def measure(self) -> float:
        return float(self.areas.sum())

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise ValueError(f"expected {self.n_dofs} nodal values, got shape {u.shape}")
        return u

    # -- evaluation -------------------------------------------------------
    def values(self, u) -> np.ndarray:
        """Values at triangle quadrature points, shape (T, Q)."""
        return np.asarray(u)[self.mesh.triangles] @ self.tri_basis.T

    def gradients(self, u) -> np.ndarray:
        """Piecewise constant gradients, shape (T, 2)."""
        return np.einsum("tk,tkd->td", np.asarray(u)[self.mesh.triangles], self.basis_gradients)

    def traces(self, u) -> np.ndarray:
        """Values at edge quadrature points, shape (E, Qe)."""
        return np.asarray(u)[self.mesh.boundary_edges] @ self.edge_basis.T

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``."""
        x, y = self.mesh.vertices.T
        return np.broadcast_to(np.asarray(func(x, y), dtype=float), (self.n_dofs,)).copy()

    # -- integration ------------------------------------------------------
    def integrate(self, qvals) -> float:
        return float(np.sum(self.tri_weights * qvals))

    def integrate_per_triangle(self, cvals) -> float:
        """Integrate a piecewise constant given per triangle."""
        return float(np.dot(self.areas, cvals))

    def integrate_boundary(self, evals) -> float:
        return float(np.sum(self.edge_weights * evals))

    # -- assembly against the nodal basis ---------------------------------
    def load_values(self, qvals) -> np.ndarray:
        """``int c phi_i dx`` for ``c`` sampled at quadrature points."""
        local = (self.tri_weights * qvals) @ self.tri_basis          # (T, 3)
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(),
                           minlength=self.n_dofs)

    def load_flux(self, flux) -> np.ndarray:
        """``int F . grad(phi_i) dx`` for a piecewise constant field ``F`` (T, 2)."""
        local = self.areas[:, None] * np.einsum("td,tkd->tk", flux, self.basis_gradients)
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(),
                           minlength=self.n_dofs)

    def load_boundary(self, evals) -> np.ndarray:
        """``int_{boundary} c phi_i dsigma`` for ``c`` sampled at edge points."""
        local = (self.edge_weights * evals) @ self.edge_basis        # (E, 2)
        return np.bincount(self.mesh.boundary_edges.ravel(), weights=local.ravel(),
                           minlength=self.n_dofs)


@dataclass(frozen=True, eq=False)
class FemFunction:
    """Nodal coefficient vector of a P1 function on ``space``."""

    space: FemSpace
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (self.space.n_dofs,):
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)

    def __len__(self):
        return len(self.coeffs)

    def pos(self) -> FemFunction:
        return FemFunction(self.space, pos_part(self.coeffs))

    def neg(self) -> FemFunction:
        return FemFunction(self.space, neg_part(self.coeffs))


def pos_part(u) -> np.ndarray:
    """Nodal positive part ``max(u, 0)``."""
    return np.maximum(np.asarray(u, dtype=float), 0.0)


def neg_part(u) -> np.ndarray:
    """Nodal negative part ``max(-u, 0)``, so that ``u = u+ - u-``."""
    return np.maximum(-np.asarray(u, dtype=float), 0.0)


def _first_bad(vals: np.ndarray) -> int | None:
    bad = ~np.isfinite(vals)
    if bad.any():
        return int(np.argwhere(bad)[0][0])
    return None


def integrate_interior(h, u, space: FemSpace) -> float:
    """Integrate ``h(x, u(x), grad u(x))`` over the domain.

    ``h`` is called once with arrays: points (T, Q, 2), values (T, Q) and
    gradients (T, Q, 2), and must return an array broadcastable to (T, Q).
    """
    u = space.check(u)
    grads = np.broadcast_to(space.gradients(u)[:, None, :], space.tri_points.shape)
    vals = np.broadcast_to(np.asarray(h(space.tri_points, space.values(u), grads), dtype=float),
                           space.tri_weights.shape)
    t = _first_bad(vals)
    if t is not None:
        raise IntegrandError(f"non-finite integrand on triangle {t}")
    return space.integrate(vals)


def integrate_boundary(h, u, space: FemSpace) -> float:
    """Integrate ``h(x, u(x))`` over the boundary; points (E, Qe, 2), values (E, Qe)."""
    u = space.check(u)
    vals = np.broadcast_to(np.asarray(h(space.edge_points, space.traces(u)), dtype=float),
                           space.edge_weights.shape)
    e = _first_bad(vals)
    if e is not None:
        raise IntegrandError(f"non-finite integrand on boundary edge {e}")
    return space.integrate_boundary(vals)
