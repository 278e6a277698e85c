"""Outer penalty continuation and the inner Newton solver.

Each continuation step k solves one regularized saddle problem at
penalty alpha_k by Newton's method; the previous latent variable enters
the primal right-hand side, and the multiplier estimate is recovered as
(psi_{k-1} - psi_k) / alpha_k.  The state is warm-started across steps,
so late steps typically cost one or two Newton iterations.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg


@dataclass
class AlphaSchedule:
    """Geometric penalty ramp alpha_{k+1} = min(rate * alpha_k, alpha_max).

    stop='repeat' ends after the cap value has occurred twice in a row;
    stop='first' ends at its first occurrence.  An explicit ``nsteps``
    overrides both and just caps the ramp at the budget.
    """

    alpha0: float
    rate: float = 2.0
    alpha_max: float = None
    nsteps: int = None
    stop: str = "repeat"

    def values(self):
        amax = np.inf if self.alpha_max is None else self.alpha_max
        if self.nsteps is not None:
            return [min(self.alpha0 * self.rate ** k, amax)
                    for k in range(self.nsteps)]
        if not np.isfinite(amax):
            raise ValueError("need alpha_max or nsteps")
        out = []
        k = 0
        while self.alpha0 * self.rate ** k < amax * (1.0 - 1e-12):
            out.append(self.alpha0 * self.rate ** k)
            k += 1
        out.append(amax)
        if self.stop == "repeat":
            out.append(amax)
        return out


@dataclass
class SolverOptions:
    newton_rtol: float = 1e-10
    newton_atol: float = 1e-12
    newton_maxit: int = 100
    gmres_rtol: float = 1e-8
    gmres_atol: float = 0.0
    gmres_maxit: int = 150
    gmres_side: str = "right"
    linear_solver: str = "schur"      # or "monolithic"
    factor_method: str = "auto"
    line_search: bool = False
    max_backtracks: int = 10


@dataclass
class StepRecord:
    alpha: float
    newton_iters: int
    gmres_iters: list
    residuals: list
    converged: bool
    diverged: bool = False

    @property
    def gmres_total(self):
        return int(sum(self.gmres_iters))


@dataclass
class SolveReport:
    u: np.ndarray = None              # interior coefficients
    psi: np.ndarray = None
    multiplier: np.ndarray = None     # latest (psi_prev - psi) / alpha
    outer_increment: float = 0.0      # |u_k - u_{k-1}|_A at the last step
    alpha_last: float = 0.0
    steps: list = field(default_factory=list)
    t_assembly_s: float = 0.0
    t_linsolve_s: float = 0.0
    t_total_s: float = 0.0
    converged: bool = True

    @property
    def newton_total(self):
        return int(sum(s.newton_iters for s in self.steps))

    @property
    def gmres_total(self):
        return int(sum(s.gmres_total for s in self.steps))

    @property
    def gmres_avg(self):
        n = self.newton_total
        return self.gmres_total / n if n else 0.0

    @property
    def t_linsolve_avg_s(self):
        n = self.newton_total
        return self.t_linsolve_s / n if n else 0.0


def residual(disc, alpha, psi_prev, u, psi):
    """Right-hand side of the Newton system (negated nonlinear residual).

    Returns (b_u, b_psi, clamped); clamped reports exponential overflow
    in the obstacle branch.
    """
    B = disc.B
    b_u = alpha * disc.f_load + B @ psi_prev - alpha * (disc.A @ u) - B @ psi
    clamped = False
    if disc.kind == "obstacle":
        em, clamped = disc.exp_moments(psi)
        b_psi = disc.phi_moments - B.T @ u - em
    else:
        b_psi = disc.nl_moments(psi) - B.T @ u
    return b_u, b_psi, clamped


def newton_solve(disc, alpha, psi_prev, u, psi, beta, opts, A_factor=None,
                 timings=None):
    """Newton iteration on one penalty subproblem; returns updated state
    and a StepRecord.  The iterate is clamped-safe: overflow in the
    entropy term marks the step diverged instead of propagating inf."""
    if A_factor is None:
        A_factor = linalg.factor_stiffness(disc.A, opts.factor_method, disc.dim)
    u = u.copy()
    psi = psi.copy()
    gmres_iters = []
    hist = []
    converged = False
    diverged = False
    b_u, b_psi, clamped = residual(disc, alpha, psi_prev, u, psi)
    norm0 = np.hypot(np.linalg.norm(b_u), np.linalg.norm(b_psi))
    hist.append(norm0)
    target = max(opts.newton_rtol * norm0, opts.newton_atol)
    it = 0
    while it < opts.newton_maxit:
        if hist[-1] <= target:
            converged = True
            break
        t0 = time.perf_counter()
        D = disc.assemble_D(psi)
        if timings is not None:
            timings["assembly"] += time.perf_counter() - t0
        if getattr(D, "clamped", False) or clamped:
            diverged = True
            break
        t0 = time.perf_counter()
        if opts.linear_solver == "monolithic":
            du, dpsi = linalg.monolithic_solve(disc, D, alpha, beta, b_u, b_psi)
            gmres_iters.append(0)
        else:
            r = linalg.schur_solve(disc, D, alpha, beta, b_u, b_psi, A_factor,
                                   rtol=opts.gmres_rtol, atol=opts.gmres_atol,
                                   maxiter=opts.gmres_maxit, side=opts.gmres_side)
            du, dpsi = r.du, r.dpsi
            gmres_iters.append(r.gmres.iterations)
        if timings is not None:
            timings["linsolve"] += time.perf_counter() - t0
        it += 1
        step = 1.0
        for bt in range(opts.max_backtracks + 1):
            b_u, b_psi, clamped = residual(disc, alpha, psi_prev,
                                           u + step * du, psi + step * dpsi)
            norm = np.hypot(np.linalg.norm(b_u), np.linalg.norm(b_psi))
            if not opts.line_search:
                break
            if norm < hist[-1] and not clamped and np.isfinite(norm):
                break
            step *= 0.5
        u += step * du
        psi += step * dpsi
        if not np.isfinite(norm):
            diverged = True
            hist.append(norm)
            break
        hist.append(norm)
    else:
        converged = hist[-1] <= target
    record = StepRecord(alpha=alpha, newton_iters=it, gmres_iters=gmres_iters,
                        residuals=hist, converged=converged, diverged=diverged)
    return u, psi, record


def solve(disc, schedule, beta, opts=None, u0=None, psi0=None, psi_prev0=None,
          outer_tol=None):
    """Run the full penalty continuation on one discretization.

    ``outer_tol`` optionally stops once the primal update between
    consecutive steps drops below it (measured in the stiffness
    seminorm); otherwise the schedule is consumed exactly.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    timings = {"assembly": 0.0, "linsolve": 0.0}
    t0 = time.perf_counter()
    A_factor = linalg.factor_stiffness(disc.A, opts.factor_method, disc.dim)
    timings["assembly"] += time.perf_counter() - t0
    u = np.zeros(disc.ndof_u) if u0 is None else np.array(u0, dtype=float)
    psi = np.zeros(disc.ndof_psi) if psi0 is None else np.array(psi0, dtype=float)
    psi_prev = np.zeros(disc.ndof_psi) if psi_prev0 is None \
        else np.array(psi_prev0, dtype=float)
    report = SolveReport()
    for alpha in (schedule.values() if isinstance(schedule, AlphaSchedule)
                  else list(schedule)):
        u_old = u
        u, psi, rec = newton_solve(disc, alpha, psi_prev, u, psi, beta, opts,
                                   A_factor=A_factor, timings=timings)
        report.steps.append(rec)
        report.multiplier = (psi_prev - psi) / alpha
        report.alpha_last = alpha
        psi_prev = psi.copy()
        diff = u - u_old
        report.outer_increment = np.sqrt(abs(diff @ (disc.A @ diff)))
        if rec.diverged or not rec.converged:
            report.converged = False
            break
        if outer_tol is not None and report.outer_increment <= outer_tol:
            break
    report.u = u
    report.psi = psi
    report.t_assembly_s = timings["assembly"]
    report.t_linsolve_s = timings["linsolve"]
    report.t_total_s = time.perf_counter() - t_start
    return report
