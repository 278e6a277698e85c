"""Primal-dual active set solver on P1 elements.

This is the low-order baseline: nodal feasibility is exact, each change
of the active set re-factorizes the reduced stiffness matrix, and the
convergence order is capped at O(h).  The multiplier convention is
A u + lam = F with lam >= 0 on the contact set.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .linalg import factor_stiffness
from .spaces import PsiSpace1D, USpace1D


@dataclass
class PdasResult:
    """Nodal solution and multiplier, boundary entries zero."""

    u: np.ndarray
    lam: np.ndarray
    iterations: int
    active: np.ndarray
    converged: bool
    oscillated: bool
    t_factor_s: float
    t_solve_s: float


def _p1_load_1d(mesh, f, npts=8):
    """(f, hat_i) for all nodes by per-cell Gauss quadrature."""
    g, w = leggauss(npts)
    out = np.zeros(mesh.ncells + 1)
    for i in range(mesh.ncells):
        h = mesh.widths[i]
        x = 0.5 * (mesh.points[i] + mesh.points[i + 1]) + 0.5 * h * g
        fv = np.full(npts, float(f)) if np.isscalar(f) else f(x)
        out[i] += 0.5 * h * np.sum(w * fv * 0.5 * (1.0 - g))
        out[i + 1] += 0.5 * h * np.sum(w * fv * 0.5 * (1.0 + g))
    return out


def _p1_load_2d(mesh2d, f, npts=6):
    g, w = leggauss(npts)
    mx, my = mesh2d.mesh_x, mesh2d.mesh_y
    nx, ny = mx.ncells, my.ncells
    out = np.zeros((nx + 1, ny + 1))
    hat = np.vstack([0.5 * (1.0 - g), 0.5 * (1.0 + g)])
    for i in range(nx):
        hx = mx.widths[i]
        x = 0.5 * (mx.points[i] + mx.points[i + 1]) + 0.5 * hx * g
        for j in range(ny):
            hy = my.widths[j]
            y = 0.5 * (my.points[j] + my.points[j + 1]) + 0.5 * hy * g
            X, Y = np.meshgrid(x, y, indexing="ij")
            fv = np.full((npts, npts), float(f)) if np.isscalar(f) else f(X, Y)
            blk = (hat * w) @ fv @ (hat * w).T
            out[i:i + 2, j:j + 2] += 0.25 * hx * hy * blk
    return out.ravel()


def _pdas_loop(A, F, phi_nodes, c, maxit, dim, active0=None):
    """Semismooth iteration on the interior system A u + lam = F."""
    n = F.size
    active = (np.zeros(n, dtype=bool) if active0 is None
              else np.asarray(active0, dtype=bool).copy())
    seen = {active.tobytes()}
    u = np.zeros(n)
    lam = np.zeros(n)
    t_factor = 0.0
    t_solve = 0.0
    converged = False
    oscillated = False
    iterations = 0
    for _ in range(maxit):
        iterations += 1
        inact = np.flatnonzero(~active)
        iact = np.flatnonzero(active)
        u[active] = phi_nodes[active]
        rhs = F[inact] - A[inact][:, iact] @ phi_nodes[iact]
        t0 = time.perf_counter()
        factor = factor_stiffness(A[inact][:, inact].tocsc(), dim=dim)
        t1 = time.perf_counter()
        u[inact] = factor.solve(rhs)
        t_solve += time.perf_counter() - t1
        t_factor += t1 - t0
        lam[:] = 0.0
        lam[active] = (F - A @ u)[active]
        new_active = lam + c * (u - phi_nodes) > 0
        if np.array_equal(new_active, active):
            converged = True
            break
        key = new_active.tobytes()
        if key in seen:
            oscillated = True
            active = new_active
            break
        seen.add(key)
        active = new_active
    return u, lam, iterations, active, converged, oscillated, t_factor, t_solve


def pdas_solve_1d(mesh, f, phi, c=1.0, maxit=100, active0=None):
    """PDAS on a P1 interval mesh; returns full nodal vectors.

    ``active0`` optionally seeds the active set (full nodal mask); on a
    refined mesh, seeding from the previous solve keeps the iteration
    count flat instead of growing with the contact region's node count.
    """
    if np.any(mesh.degrees != 1):
        raise ValueError("PDAS baseline requires p = 1 on every cell")
    if c <= 0:
        raise ValueError("c must be > 0")
    from .assembly import restrict, stiffness_1d

    space = USpace1D(mesh)
    ix = space.interior
    A = restrict(stiffness_1d(space), ix, ix).tocsr()
    F = _p1_load_1d(mesh, f)[ix]
    xs = mesh.points[1:-1]
    phi_nodes = np.full(xs.size, float(phi)) if np.isscalar(phi) else phi(xs)
    act0 = None if active0 is None else np.asarray(active0, dtype=bool)[ix]
    u, lam, its, act, conv, osc, tf, ts = _pdas_loop(A, F, phi_nodes, c,
                                                    maxit, dim=1,
                                                    active0=act0)
    u_full = np.zeros(mesh.ncells + 1)
    lam_full = np.zeros(mesh.ncells + 1)
    act_full = np.zeros(mesh.ncells + 1, dtype=bool)
    u_full[ix] = u
    lam_full[ix] = lam
    act_full[ix] = act
    return PdasResult(u_full, lam_full, its, act_full, conv, osc, tf, ts)


def pdas_solve_2d(mesh2d, f, phi, c=1.0, maxit=100):
    """PDAS on a P1 tensor mesh; nodal vectors are x-major raveled."""
    if np.any(mesh2d.degrees_x != 1) or np.any(mesh2d.degrees_y != 1):
        raise ValueError("PDAS baseline requires p = 1 on every cell")
    if c <= 0:
        raise ValueError("c must be > 0")
    from .assembly import mass_1d, stiffness_1d

    sx = USpace1D(mesh2d.mesh_x)
    sy = USpace1D(mesh2d.mesh_y)
    Ax, Ay = stiffness_1d(sx), stiffness_1d(sy)
    Mx, My = mass_1d(sx), mass_1d(sy)
    A_full = sp.kron(Ax, My) + sp.kron(Mx, Ay)
    nxn, nyn = sx.ndof, sy.ndof
    keep = np.zeros((nxn, nyn), dtype=bool)
    keep[np.ix_(sx.interior, sy.interior)] = True
    ix = np.flatnonzero(keep.ravel())
    A = A_full.tocsr()[ix][:, ix]
    F = _p1_load_2d(mesh2d, f)[ix]
    X, Y = np.meshgrid(mesh2d.mesh_x.points, mesh2d.mesh_y.points,
                       indexing="ij")
    phi_all = (np.full(X.shape, float(phi)) if np.isscalar(phi)
               else phi(X, Y)).ravel()
    u, lam, its, act, conv, osc, tf, ts = _pdas_loop(A, F, phi_all[ix], c,
                                                     maxit, dim=2)
    n = nxn * nyn
    u_full = np.zeros(n)
    lam_full = np.zeros(n)
    act_full = np.zeros(n, dtype=bool)
    u_full[ix] = u
    lam_full[ix] = lam
    act_full[ix] = act
    return PdasResult(u_full, lam_full, its, act_full, conv, osc, tf, ts)


def multiplier_projection(result, mesh):
    """Degree-0 cellwise projection of the nodal multiplier, with the
    sign flipped to the residual convention f + u'' + lam used by the
    error estimator."""
    space = PsiSpace1D(mesh, np.zeros(mesh.ncells, dtype=int))
    coefs = -0.5 * (result.lam[:-1] + result.lam[1:])
    return space, coefs
