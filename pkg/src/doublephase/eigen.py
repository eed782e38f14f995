"""First Robin and Steklov eigenpairs of the p-Laplacian on a P1 space.

The eigenvalues are minima of Rayleigh quotients over the discrete space,
found by L-BFGS descent with renormalization after every step. For p = 2
the same discrete problems are small generalized symmetric eigenproblems,
solved densely by :func:`dense_first_eigenvalue` as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .descent import minimize
from .mesh import FemFunction, FemSpace, Mesh
from .musielak import abs_pow

__all__ = [
    "EigenResult",
    "EigenConvergenceError",
    "rayleigh_robin",
    "rayleigh_steklov",
    "robin_first_eigenpair",
    "steklov_first_eigenpair",
    "lp_norm_p",
    "boundary_lp_norm_p",
    "gradient_lp_norm_p",
    "assemble_p2_matrices",
    "dense_first_eigenvalue",
]


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class EigenResult:
    lam: float
    eigenfunction: FemFunction
    normalization: str          # "robin": ||u||_p = 1, "steklov": ||u||_{p, boundary} = 1
    iterations: int
    residual: float
    p: float
    beta: float | None = None

    @property
    def positive(self) -> bool:
        return bool(np.all(self.eigenfunction.coeffs > 0))


def lp_norm_p(space: FemSpace, u, p: float) -> float:
    """``int |u|^p dx``."""
    return space.integrate(abs_pow(space.values(u), p))


def boundary_lp_norm_p(space: FemSpace, u, p: float) -> float:
    """``int_{boundary} |u|^p dsigma``."""
    return space.integrate_boundary(abs_pow(space.traces(u), p))


def gradient_lp_norm_p(space: FemSpace, u, p: float) -> float:
    """``int |grad u|^p dx`` (exact for P1)."""
    return space.integrate_per_triangle(np.hypot(*space.gradients(u).T) ** p)


def _signed(x, r):
    """``|x|^(r-2) x`` extended by 0 at x = 0."""
    return np.sign(x) * np.abs(x) ** (r - 1.0)


def _flux(space, u, p):
    g = space.gradients(u)
    n = np.hypot(g[:, 0], g[:, 1])
    w = np.zeros_like(n)
    nz = n > 0
    w[nz] = n[nz] ** (p - 2.0)
    return w[:, None] * g


def _parts(space, u, p, kind, beta):
    """Numerator, denominator and their gradients for one quotient."""
    gp = gradient_lp_norm_p(space, u, p)
    dgp = p * space.load_flux(_flux(space, u, p))
    vals, tr = space.values(u), space.traces(u)
    vp = space.integrate(abs_pow(vals, p))
    dvp = p * space.load_values(_signed(vals, p))
    bp = space.integrate_boundary(abs_pow(tr, p))
    dbp = p * space.load_boundary(_signed(tr, p))
    if kind == "robin":
        return gp + beta * bp, dgp + beta * dbp, vp, dvp
    return gp + vp, dgp + dvp, bp, dbp


def _quotient(space, u, p, kind, beta):
    num, _, den, _ = _parts(space, u, p, kind, beta)
    if not den > 0:
        raise ZeroDivisionError("Rayleigh quotient denominator vanishes")
    return num / den


def rayleigh_robin(space: FemSpace, u, p: float, beta: float) -> float:
    """``(int |grad u|^p + beta int_{boundary} |u|^p) / int |u|^p``."""
    return _quotient(space, space.check(u), p, "robin", beta)


def rayleigh_steklov(space: FemSpace, u, p: float) -> float:
    """``(int |grad u|^p + int |u|^p) / int_{boundary} |u|^p``."""
    return _quotient(space, space.check(u), p, "steklov", None)


def _first_eigenpair(space, p, kind, beta, tol, maxiter, u0):
    if p <= 1:
        raise ValueError(f"need p > 1, got {p}")
    if space.mesh.n_boundary_edges == 0:
        raise ValueError("mesh has an empty boundary")

    def norm_p(u):
        return lp_norm_p(space, u, p) if kind == "robin" else boundary_lp_norm_p(space, u, p)

    def project(u):
        return u / norm_p(u) ** (1.0 / p)

    def fun_grad(u):
        num, dnum, den, dden = _parts(space, u, p, kind, beta)
        lam = num / den
        return lam, (dnum - lam * dden) / den

    x0 = np.ones(space.n_dofs) if u0 is None else np.asarray(u0, dtype=float)
    res = minimize(fun_grad, x0, gtol=tol, maxiter=maxiter, project=project)
    u = res.x
    if u.mean() < 0:
        u = -u
    if not res.converged:
        raise EigenConvergenceError(
            f"{kind} eigenpair did not converge: residual {res.gnorm:.3e} after "
            f"{res.iterations} iterations ({res.message})", u)
    lam = _quotient(space, u, p, kind, beta)
    return EigenResult(lam, FemFunction(space, u), kind, res.iterations, res.gnorm, p,
                       beta if kind == "robin" else None)


def robin_first_eigenpair(space: FemSpace, p: float, beta: float, tol: float = 1e-10,
                          maxiter: int = 20000, u0=None) -> EigenResult:
    """First eigenpair with boundary flux ``-beta |u|^(p-2) u``, ``||u||_p = 1``."""
    if not beta > 0:
        raise ValueError(f"need beta > 0, got {beta}")
    return _first_eigenpair(space, p, "robin", float(beta), tol, maxiter, u0)


def steklov_first_eigenpair(space: FemSpace, p: float, tol: float = 1e-10,
                            maxiter: int = 20000, u0=None) -> EigenResult:
    """First Steklov eigenpair, normalized by ``||u||_{p, boundary} = 1``."""
    return _first_eigenpair(space, p, "steklov", None, tol, maxiter, u0)


def assemble_p2_matrices(mesh: Mesh, lumped_boundary: bool = False):
    """Dense stiffness, mass and boundary mass matrices from exact P1 element formulas."""
    nv = mesh.n_vertices
    K = np.zeros((nv, nv))
    M = np.zeros((nv, nv))
    B = np.zeros((nv, nv))
    m_loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for tri in mesh.triangles:
        xy = mesh.vertices[tri]
        area = 0.5 * abs(np.linalg.det(np.column_stack([xy[1] - xy[0], xy[2] - xy[0]])))
        # gradients of barycentric coordinates
        G = np.linalg.solve(np.vstack([np.ones(3), xy.T]), np.array([[0, 0], [1, 0], [0, 1.0]]))
        K[np.ix_(tri, tri)] += area * G @ G.T
        M[np.ix_(tri, tri)] += area * m_loc
    b_loc = np.eye(2) / 2.0 if lumped_boundary else (np.ones((2, 2)) + np.eye(2)) / 6.0
    for edge in mesh.boundary_edges:
        length = np.linalg.norm(mesh.vertices[edge[1]] - mesh.vertices[edge[0]])
        B[np.ix_(edge, edge)] += length * b_loc
    return K, M, B


def dense_first_eigenvalue(mesh: Mesh, kind: str, beta: float = 1.0,
                           lumped_boundary: bool = False) -> float:
    """Smallest eigenvalue of the p = 2 discrete problem, by dense ``eigh``.

    kind : "robin" (K + beta B) u = lam M u, "steklov" (K + M) u = lam B u,
    or "dirichlet" K u = lam M u on interior nodes.
    """
    K, M, B = assemble_p2_matrices(mesh, lumped_boundary)
    if kind == "robin":
        return float(la.eigh(K + beta * B, M, eigvals_only=True, subset_by_index=[0, 0])[0])
    if kind == "steklov":
        # B is singular; take the largest eigenvalue of B v = mu (K + M) v.
        nv = mesh.n_vertices
        mu = la.eigh(B, K + M, eigvals_only=True, subset_by_index=[nv - 1, nv - 1])[0]
        return float(1.0 / mu)
    if kind == "dirichlet":
        inner = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices())
        Ki, Mi = K[np.ix_(inner, inner)], M[np.ix_(inner, inner)]
        return float(la.eigh(Ki, Mi, eigvals_only=True, subset_by_index=[0, 0])[0])
    raise ValueError(f"unknown kind {kind!r}")
