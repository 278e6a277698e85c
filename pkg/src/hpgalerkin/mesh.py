"""Interval meshes and tensor-product meshes with per-cell polynomial degrees."""

import json

import numpy as np


class Mesh1D:
    """Partition of an interval into cells, each carrying a polynomial degree.

    ``points`` are strictly increasing breakpoints and ``degrees[i] >= 1``
    is the degree of the solution space on cell ``[points[i], points[i+1]]``.
    Instances are treated as immutable; refinement returns a new mesh.
    """

    def __init__(self, points, degrees):
        points = np.ascontiguousarray(points, dtype=float)
        degrees = np.ascontiguousarray(degrees, dtype=int)
        if points.ndim != 1 or points.size < 2:
            raise ValueError("need at least two breakpoints")
        if not np.all(np.isfinite(points)):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(points) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if degrees.shape != (points.size - 1,):
            raise ValueError("need exactly one degree per cell")
        if np.any(degrees < 1):
            raise ValueError("cell degrees must be >= 1")
        self.points = points
        self.degrees = degrees
        self.points.flags.writeable = False
        self.degrees.flags.writeable = False

    @property
    def ncells(self):
        return self.points.size - 1

    @property
    def widths(self):
        return np.diff(self.points)

    @property
    def a(self):
        return self.points[0]

    @property
    def b(self):
        return self.points[-1]

    def cell_of(self, x):
        """Index of the cell containing each point (clipped to the domain)."""
        i = np.searchsorted(self.points, x, side="right") - 1
        return np.clip(i, 0, self.ncells - 1)

    def refine(self, marked, bump_degree=()):
        """Bisect the marked cells; children of cells in ``bump_degree``
        additionally carry degree p+1.  Cells listed only in ``bump_degree``
        are bisected as well, so the two sets cannot fall out of sync."""
        marked = set(int(i) for i in marked) | set(int(i) for i in bump_degree)
        bump = set(int(i) for i in bump_degree)
        for i in marked:
            if not 0 <= i < self.ncells:
                raise IndexError(f"cell index {i} out of range")
        pts = [self.points[0]]
        degs = []
        for i in range(self.ncells):
            left, right = self.points[i], self.points[i + 1]
            p = int(self.degrees[i])
            if i in marked:
                mid = 0.5 * (left + right)
                child_p = p + 1 if i in bump else p
                pts.extend([mid, right])
                degs.extend([child_p, child_p])
            else:
                pts.append(right)
                degs.append(p)
        return Mesh1D(np.array(pts), np.array(degs))

    def with_degrees(self, degrees):
        return Mesh1D(self.points, np.broadcast_to(degrees, (self.ncells,)))

    def to_json(self):
        return json.dumps({"points": self.points.tolist(),
                           "degrees": self.degrees.tolist()})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(np.array(data["points"]), np.array(data["degrees"]))

    def __eq__(self, other):
        return (isinstance(other, Mesh1D)
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.degrees, other.degrees))

    def __repr__(self):
        return (f"Mesh1D({self.ncells} cells on [{self.a:g}, {self.b:g}], "
                f"p in [{self.degrees.min()}, {self.degrees.max()}])")


def uniform_mesh_1d(a, b, ncells, degree):
    """Uniform mesh of ``ncells`` cells on [a, b] with a single degree."""
    if ncells < 1:
        raise ValueError("ncells must be >= 1")
    return Mesh1D(np.linspace(a, b, ncells + 1),
                  np.full(ncells, int(degree), dtype=int))


class TensorMesh2D:
    """Tensor product of two interval meshes.

    Cell (i, j) is the rectangle ``[x_i, x_{i+1}] x [y_j, y_{j+1}]``; its
    solution space is the tensor product of the per-direction degrees.
    Refinement is uniform only: every cell is quartered, optionally with a
    global degree increment.
    """

    def __init__(self, mesh_x, mesh_y):
        self.mesh_x = mesh_x
        self.mesh_y = mesh_y

    @property
    def ncells(self):
        return self.mesh_x.ncells * self.mesh_y.ncells

    @property
    def shape(self):
        return (self.mesh_x.ncells, self.mesh_y.ncells)

    @property
    def degrees_x(self):
        return self.mesh_x.degrees

    @property
    def degrees_y(self):
        return self.mesh_y.degrees

    def refine_uniform(self, bump_degree=False):
        mx = self.mesh_x.refine(range(self.mesh_x.ncells),
                                range(self.mesh_x.ncells) if bump_degree else ())
        my = self.mesh_y.refine(range(self.mesh_y.ncells),
                                range(self.mesh_y.ncells) if bump_degree else ())
        return TensorMesh2D(mx, my)

    def to_json(self):
        return json.dumps({"x": json.loads(self.mesh_x.to_json()),
                           "y": json.loads(self.mesh_y.to_json())})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(Mesh1D(np.array(data["x"]["points"]), np.array(data["x"]["degrees"])),
                   Mesh1D(np.array(data["y"]["points"]), np.array(data["y"]["degrees"])))

    def __repr__(self):
        return f"TensorMesh2D({self.shape[0]}x{self.shape[1]} cells)"


def uniform_mesh_2d(a, b, ncells, degree):
    """Uniform ncells x ncells tensor mesh on [a, b]^2 with one degree."""
    return TensorMesh2D(uniform_mesh_1d(a, b, ncells, degree),
                        uniform_mesh_1d(a, b, ncells, degree))
