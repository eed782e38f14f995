import numpy as np
import pytest

from doublephase.descent import minimize


def quadratic(A, b):
    def fg(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b
    return fg


class TestMinimize:
    @pytest.mark.parametrize("method", ["lbfgs", "gradient"])
    def test_quadratic(self, method, rng):
        Q = rng.standard_normal((20, 20))
        A = Q @ Q.T + 20 * np.eye(20)
        b = rng.standard_normal(20)
        res = minimize(quadratic(A, b), np.zeros(20), gtol=1e-10, method=method)
        assert res.converged
        assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-9)

    def test_rosenbrock(self):
        from scipy.optimize import rosen, rosen_der

        res = minimize(lambda x: (rosen(x), rosen_der(x)), np.full(6, -1.2), gtol=1e-9)
        assert res.converged
        assert np.allclose(res.x, 1.0, atol=1e-7)

    def test_monotone_decrease_reported(self, rng):
        A = np.diag(np.arange(1.0, 11.0))
        res = minimize(quadratic(A, np.ones(10)), rng.standard_normal(10), maxiter=3)
        assert not res.converged and res.iterations == 3

    def test_projection_kept(self):
        # minimize x.Ax on the unit sphere -> smallest eigenvector
        A = np.diag([3.0, 1.0, 2.0])

        def fg(x):
            n = x @ x
            r = x @ A @ x / n
            return r, 2 * (A @ x - r * x) / n

        res = minimize(fg, np.ones(3), gtol=1e-12, project=lambda x: x / np.linalg.norm(x))
        assert abs(res.fun - 1.0) < 1e-12
        assert abs(np.linalg.norm(res.x) - 1) < 1e-14

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            minimize(lambda x: (0.0, x), np.zeros(2), method="newton")

    def test_nonfinite_trial_steps_rejected(self):
        # f is +inf outside x > 0; the line search must back off
        def fg(x):
            if np.any(x <= 0):
                return np.inf, np.full_like(x, np.nan)
            return float(np.sum(x - np.log(x))), 1 - 1 / x

        res = minimize(fg, np.full(4, 5.0), gtol=1e-10)
        assert res.converged and np.allclose(res.x, 1.0)
