"""Fixed-point driver for the thermoforming membrane/mould coupling.

A clamped membrane is pressed into a mould whose shape responds to a
temperature field; the temperature in turn depends on the gap between
membrane and mould.  Each fixed-point iteration solves an obstacle
problem against the current mould (step I) and then the nonlinear
temperature equation (step II), until the H1 increment of the
displacement stalls.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import ObstacleDisc2D, mass_1d, restrict, stiffness_1d
from .linalg import gmres
from .proximal import AlphaSchedule, SolverOptions, solve
from .spaces import FemFunction2D


def qvi_alpha_schedule():
    """Penalty ramp used for the obstacle subproblems: x4 up to 1."""
    return AlphaSchedule(2.0 ** -6, rate=4.0, alpha_max=1.0, stop="first")


class NonContractionError(RuntimeError):
    """Raised when the fixed point's displacement increments grow for
    three consecutive iterations instead of contracting."""


def _cell_grid_values(disc, coefs_full):
    """Per-cell quadrature-grid samples of a full U coefficient vector."""
    sx, sy = disc.u_space.x, disc.u_space.y
    U = coefs_full.reshape(sx.ndof, sy.ndof)
    out = []
    for cx, cy in disc.cell_ids:
        Rx = sx.cell_legendre_map(cx)
        Ry = sy.cell_legendre_map(cy)
        C = U[np.ix_(sx.cell_dofs(cx), sy.cell_dofs(cy))]
        out.append(disc.kernels[(cx, cy)].u_values(Rx @ C @ Ry.T))
    return out


def _load_full(disc, cell_vals):
    """(w, v) moments against every U basis function, no BC restriction."""
    sx, sy = disc.u_space.x, disc.u_space.y
    out = np.zeros((sx.ndof, sy.ndof))
    for (cx, cy), vals in zip(disc.cell_ids, cell_vals):
        k = disc.kernels[(cx, cy)]
        Mu = k.moments_u(vals)
        Rx = sx.cell_legendre_map(cx)
        Ry = sy.cell_legendre_map(cy)
        out[np.ix_(sx.cell_dofs(cx), sy.cell_dofs(cy))] += Rx.T @ Mu @ Ry
    return out.ravel()


class TemperatureSolver:
    """Newton solver for (grad T, grad q) + gamma (T, q) = (g(q_gap), q).

    The temperature has no Dirichlet condition, so everything lives in
    the full U space.  Jacobian actions are matrix-free; the linear
    systems are solved by GMRES left-preconditioned with the factorized
    A + gamma M, which is exact when g' vanishes.
    """

    def __init__(self, disc, data, gmres_rtol=1.5e-8, newton_rtol=1e-9,
                 newton_maxit=30):
        self.disc = disc
        self.data = data
        self.gmres_rtol = gmres_rtol
        self.newton_rtol = newton_rtol
        self.newton_maxit = newton_maxit
        sx, sy = disc.u_space.x, disc.u_space.y
        Ax, Ay = stiffness_1d(sx), stiffness_1d(sy)
        Mx, My = mass_1d(sx), mass_1d(sy)
        self.M = sp.kron(Mx, My).tocsc()
        self.H = (sp.kron(Ax, My) + sp.kron(Mx, Ay)
                  + data.gamma * self.M).tocsc()
        self.P = splu(self.H)
        self.phi0_vals = []
        self.xi_vals = []
        for (X, Y) in disc.quad_grids():
            XX, YY = np.meshgrid(X, Y, indexing="ij")
            self.phi0_vals.append(data.mould(XX, YY))
            self.xi_vals.append(data.xi(XX, YY))

    def _residual(self, T, u_vals):
        T_vals = _cell_grid_values(self.disc, T)
        gap = [p0 + xi * Tv - uv for p0, xi, Tv, uv
               in zip(self.phi0_vals, self.xi_vals, T_vals, u_vals)]
        rhs = _load_full(self.disc, [self.data.g(q) for q in gap])
        return self.H @ T - rhs, gap

    def solve(self, u_full, T0=None):
        """Returns (T, newton_iters, gmres_iters_list)."""
        u_vals = _cell_grid_values(self.disc, u_full)
        T = (np.zeros(self.H.shape[0]) if T0 is None
             else np.array(T0, dtype=float))
        r, gap = self._residual(T, u_vals)
        norm0 = np.linalg.norm(r)
        target = max(self.newton_rtol * norm0, 1e-14)
        gmres_its = []
        newton = 0
        while np.linalg.norm(r) > target and newton < self.newton_maxit:
            gp = [self.data.g_deriv(q) * xi
                  for q, xi in zip(gap, self.xi_vals)]

            def jmul(v):
                v_vals = _cell_grid_values(self.disc, v)
                low = _load_full(self.disc,
                                 [w * vv for w, vv in zip(gp, v_vals)])
                return self.H @ v - low

            res = gmres(jmul, r, M=self.P.solve, side="left",
                        rtol=self.gmres_rtol, atol=0.0)
            T = T - res.x
            gmres_its.append(res.iterations)
            newton += 1
            r, gap = self._residual(T, u_vals)
        return T, newton, gmres_its


def temperature_solve(u, data, tol=1.5e-8):
    """One-off temperature solve for a given membrane displacement."""
    disc = ObstacleDisc2D(u.space.mesh, f=data.f, phi=0.0)
    solver = TemperatureSolver(disc, data, gmres_rtol=tol)
    T, _, _ = solver.solve(u.coefs)
    return FemFunction2D(u.space, T)


@dataclass
class FixedPointRecord:
    increment: float
    newton_obstacle: int
    gmres_obstacle: int
    newton_temp: int
    gmres_temp: int


@dataclass
class ThermoformReport:
    records: list = field(default_factory=list)
    converged: bool = False
    t_total_s: float = 0.0

    @property
    def fixed_point_count(self):
        return len(self.records)

    @property
    def avg_newton_obstacle(self):
        return np.mean([r.newton_obstacle for r in self.records])

    @property
    def avg_gmres_obstacle(self):
        n = sum(r.newton_obstacle for r in self.records)
        return sum(r.gmres_obstacle for r in self.records) / n if n else 0.0

    @property
    def avg_newton_temp(self):
        return np.mean([r.newton_temp for r in self.records])

    @property
    def avg_gmres_temp(self):
        n = sum(r.newton_temp for r in self.records)
        return sum(r.gmres_temp for r in self.records) / n if n else 0.0


def thermoform_solve(data, mesh2d, tol_fp=3e-3, max_fp=30, beta=1e-6,
                     opts=None):
    """Alternate obstacle and temperature solves until the displacement
    increment drops below ``tol_fp`` in H1.

    The obstacle subproblems restart from zero (the mould moved), the
    temperature warm-starts from the previous field.  Raises
    NonContractionError after three consecutive growing increments.
    """
    t_start = time.perf_counter()
    disc = ObstacleDisc2D(mesh2d, f=data.f, phi=0.0)
    tsolver = TemperatureSolver(disc, data)
    sx, sy = disc.u_space.x, disc.u_space.y
    Mx = restrict(mass_1d(sx), sx.interior, sx.interior)
    My = restrict(mass_1d(sy), sy.interior, sy.interior)
    M_int = sp.kron(Mx, My).tocsc()
    sched = qvi_alpha_schedule()
    # moderate Newton tolerance: the subproblems only need enough accuracy
    # for the outer increment test, and GMRES floors the residual near 1e-7;
    # damping pays off here because each mould update restarts from zero
    sopts = opts or SolverOptions(gmres_rtol=1e-7, gmres_atol=1e-7,
                                  newton_atol=5e-4, newton_rtol=0.0,
                                  line_search=True)

    T = np.zeros(sx.ndof * sy.ndof)
    u_prev = np.zeros(disc.ndof_u)
    report = ThermoformReport()
    inc_prev = np.inf
    growing = 0
    for _ in range(max_fp):
        T_vals = _cell_grid_values(disc, T)
        mould = [p0 + xi * Tv for p0, xi, Tv
                 in zip(tsolver.phi0_vals, tsolver.xi_vals, T_vals)]
        disc.phi_moments = disc.moments_from_values(mould)
        rep = solve(disc, sched, beta=beta, opts=sopts)
        if not rep.converged:
            raise RuntimeError("obstacle subproblem did not converge")
        d = rep.u - u_prev
        inc = float(np.sqrt(d @ (disc.A @ d) + d @ (M_int @ d)))
        u_full = disc.u_space.extend_interior(rep.u)
        T, t_newton, t_gmres = tsolver.solve(u_full, T0=T)
        report.records.append(FixedPointRecord(
            inc, rep.newton_total, rep.gmres_total, t_newton,
            int(sum(t_gmres))))
        if inc <= tol_fp:
            report.converged = True
            break
        if inc > inc_prev:
            growing += 1
            if growing >= 3:
                raise NonContractionError(
                    f"increment grew {growing} times: {inc:.3e}")
        else:
            growing = 0
        u_prev = rep.u
        inc_prev = inc
    report.t_total_s = time.perf_counter() - t_start
    u_fn = FemFunction2D(disc.u_space, disc.u_space.extend_interior(rep.u))
    T_fn = FemFunction2D(disc.u_space, T)
    return u_fn, T_fn, report
