"""Hierarchical p-FEM solvers for pointwise-constrained variational problems.

Subpackages cover interval and tensor-product meshes, hierarchical bases
built from integrated Legendre polynomials, fast cell-local transforms,
saddle-point assembly, preconditioned Krylov solvers, a proximal outer
loop for obstacle- and gradient-type constraints, hp-adaptivity in 1D,
a primal-dual active set baseline, and a thermoforming fixed-point driver.
"""

__version__ = "0.1.0"
