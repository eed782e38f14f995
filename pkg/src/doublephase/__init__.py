"""Finite element tools for double phase problems with Robin and Steklov eigenvalue data."""

__version__ = "0.1.0"

from .mesh import FemFunction, FemSpace, Mesh, build_unit_square_mesh  # noqa: E402
from .musielak import ExponentConfig, WeightField  # noqa: E402
from .operators import NonlinearitySpec  # noqa: E402

__all__ = ["Mesh", "FemSpace", "FemFunction", "build_unit_square_mesh", "ExponentConfig",
           "WeightField", "NonlinearitySpec", "__version__"]
