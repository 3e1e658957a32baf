"""Coarse finite element solutions corrected patch-wise by a multilayer perceptron."""
from .fem import FemSolution, RhsFunction
from .mesh import Rect, build_mesh, build_patches, refine
from .network import Mlp, init_mlp

__version__ = "0.1.0"

__all__ = ["FemSolution", "RhsFunction", "Rect", "build_mesh", "build_patches", "refine", "Mlp", "init_mlp"]
