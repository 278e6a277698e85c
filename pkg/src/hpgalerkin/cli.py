"""Command line driver for convergence studies and benchmarks.

Four subcommands: ``study`` runs a refinement study on one of the model
problems and writes one CSV row per level; ``bench-precond`` measures
preconditioned GMRES iteration counts on the latent Schur complement;
``make-ref`` stores a heavily-refined solution for use as an error
reference; ``thermoform`` runs the membrane/mould fixed point and emits
an iteration-count table.

Every run also writes a JSON sidecar with the resolved configuration and
the rows, so a CSV is always traceable to its parameters.
"""

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import linalg
from .adaptivity import h_refine_step, hp_refine_step
from .assembly import (CellBlockMatrix, GradientDisc1D, GradientDisc2D,
                       ObstacleDisc1D, ObstacleDisc2D)
from .errors import h1_error_1d, h1_error_2d, h1_norm_1d
from .mesh import Mesh1D, TensorMesh2D, uniform_mesh_1d, uniform_mesh_2d
from .pdas import multiplier_projection, pdas_solve_1d, pdas_solve_2d
from .problems import (BesselObstacle2D, GradientFrame2D,
                       OscillatoryObstacle1D, ThermoformingData)
from .proximal import AlphaSchedule, SolverOptions, solve
from .qvi import thermoform_solve
from .spaces import FemFunction1D, FemFunction2D, USpace1D, USpace2D

PROBLEMS = ("obstacle1d-oscillatory", "obstacle2d-bessel", "gradient2d",
            "thermoforming", "precond-bench")
STRATEGIES = ("h-uniform", "p-uniform", "hp-uniform", "h-adaptive",
              "hp-adaptive")

STUDY_COLUMNS = ("dofs", "h_min", "h_max", "p_min", "p_max", "H1_error",
                 "newton_total", "gmres_avg", "t_assembly_s",
                 "t_linsolve_avg_s", "t_total_s", "status")

BENCH_COLUMNS = ("problem", "dim", "cells", "p", "beta", "iterations",
                 "converged", "t_factor_s")

THERMOFORM_COLUMNS = ("p", "fixed_point", "avg_newton_step1",
                      "avg_gmres_step1", "avg_newton_step2",
                      "avg_gmres_step2", "status")


@dataclass
class ProblemSpec:
    """Resolved study configuration; None fields fall back to the
    per-problem defaults at run time."""

    problem: str
    strategy: str = "h-uniform"
    p: int = None
    cells: int = None
    steps: int = None
    alpha0: float = None
    alpha_rate: float = None
    alpha_max: float = None
    beta: float = None
    rtol: float = None
    seed: int = 0
    ref: str = None

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if (self.strategy in ("h-adaptive", "hp-adaptive")
                and self.problem != "obstacle1d-oscillatory"):
            raise ValueError("adaptive strategies are only wired up for "
                             "obstacle1d-oscillatory")


def ls_rate(dofs, errors):
    """Least-squares slope of log(error) against log(dofs), negated so a
    decaying error gives a positive rate."""
    d = np.log(np.asarray(dofs, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    if d.size < 2:
        return math.nan
    return float(-np.polyfit(d, e, 1)[0])


def _alpha_schedule(spec, alpha0, rate, alpha_max):
    return AlphaSchedule(
        spec.alpha0 if spec.alpha0 is not None else alpha0,
        rate=spec.alpha_rate if spec.alpha_rate is not None else rate,
        alpha_max=spec.alpha_max if spec.alpha_max is not None else alpha_max)


def _row(**kw):
    row = {c: math.nan for c in STUDY_COLUMNS}
    row["status"] = "ok"
    row.update(kw)
    return row


def _fail_row(exc, **kw):
    return _row(status=f"failed:{type(exc).__name__}", **kw)


def _lvpp_row(mesh_h, mesh_p, ndof, rep, err):
    n = max(rep.newton_total, 1)
    status = "ok" if rep.converged else "failed:newton"
    return _row(dofs=ndof, h_min=min(mesh_h), h_max=max(mesh_h),
                p_min=min(mesh_p), p_max=max(mesh_p), H1_error=err,
                newton_total=rep.newton_total, gmres_avg=rep.gmres_avg,
                t_assembly_s=rep.t_assembly_s,
                t_linsolve_avg_s=(rep.t_assembly_s + rep.t_linsolve_s) / n,
                t_total_s=rep.t_total_s, status=status)


def _pdas_row(mesh_h, ndof, res, err):
    n = max(res.iterations, 1)
    status = "ok" if res.converged else (
        "failed:oscillation" if res.oscillated else "failed:maxit")
    return _row(dofs=ndof, h_min=min(mesh_h), h_max=max(mesh_h),
                p_min=1, p_max=1, H1_error=err,
                newton_total=res.iterations, gmres_avg=0.0,
                t_assembly_s=res.t_factor_s,
                t_linsolve_avg_s=(res.t_factor_s + res.t_solve_s) / n,
                t_total_s=res.t_factor_s + res.t_solve_s, status=status)


# ---------------------------------------------------------------- studies

def _study_obstacle1d(spec):
    prob = OscillatoryObstacle1D()
    breaks = (prob.x0, prob.x1, prob.x2, prob.x3)
    p = spec.p if spec.p is not None else (1 if spec.strategy in
                                           ("h-uniform", "h-adaptive") else 2)
    sched = _alpha_schedule(spec, 2.0 ** -7, math.sqrt(2.0), 2.0 ** -3)
    beta = spec.beta if spec.beta is not None else 1e-8
    # damping rescues the finest adaptive levels where the cold exp term
    # overshoots; it never triggers on the uniform ladders
    opts = SolverOptions(line_search=True)
    if spec.rtol is not None:
        opts.gmres_rtol = spec.rtol

    def lvpp_level(mesh):
        disc = ObstacleDisc1D(mesh, f=prob.f, phi=prob.phi)
        rep = solve(disc, sched, beta=beta, opts=opts)
        fn = FemFunction1D(disc.u_space,
                           disc.u_space.extend_interior(rep.u))
        err = h1_error_1d(fn, prob.exact, prob.exact_deriv,
                          breakpoints=breaks)[0]
        return disc, rep, fn, err

    rows = []
    if p == 1:
        # low-order baseline: active-set solver on piecewise linears
        cells = spec.cells if spec.cells is not None else 60
        steps = spec.steps if spec.steps is not None else 5
        mesh = uniform_mesh_1d(*prob.domain, cells, 1)
        act0 = None
        prev_fn = None
        for _ in range(steps):
            if prev_fn is not None:
                act0 = np.abs(prob.phi - prev_fn.eval(mesh.points)) < 1e-12
            try:
                res = pdas_solve_1d(mesh, prob.f, prob.phi, active0=act0)
            except Exception as exc:
                rows.append(_fail_row(exc, dofs=mesh.ncells - 1))
                break
            fn = FemFunction1D(USpace1D(mesh), res.u)
            err = h1_error_1d(fn, prob.exact, prob.exact_deriv,
                              breakpoints=breaks)[0]
            rows.append(_pdas_row(mesh.widths, mesh.ncells - 1, res, err))
            prev_fn = fn
            if spec.strategy == "h-adaptive":
                space, lam = multiplier_projection(res, mesh)
                rs = h_refine_step(fn, lam, space, prob.f, prob.phi,
                                   delta=0.3)
                mesh = rs.mesh
            else:
                mesh = uniform_mesh_1d(*prob.domain, 2 * mesh.ncells, 1)
        return rows

    if spec.strategy == "h-uniform":
        cells = spec.cells if spec.cells is not None else 20
        steps = spec.steps if spec.steps is not None else 5
        for k in range(steps):
            mesh = uniform_mesh_1d(*prob.domain, cells * 2 ** k, p)
            try:
                disc, rep, fn, err = lvpp_level(mesh)
            except Exception as exc:
                rows.append(_fail_row(exc))
                break
            rows.append(_lvpp_row(mesh.widths, mesh.degrees, disc.ndof_u,
                                  rep, err))
    elif spec.strategy == "p-uniform":
        cells = spec.cells if spec.cells is not None else 20
        steps = spec.steps if spec.steps is not None else 10
        for k in range(steps):
            mesh = uniform_mesh_1d(*prob.domain, cells, p + k)
            try:
                disc, rep, fn, err = lvpp_level(mesh)
            except Exception as exc:
                rows.append(_fail_row(exc))
                break
            rows.append(_lvpp_row(mesh.widths, mesh.degrees, disc.ndof_u,
                                  rep, err))
    elif spec.strategy == "h-adaptive":
        # adaptive bisection paired with a uniform degree bump per level
        cells = spec.cells if spec.cells is not None else 20
        steps = spec.steps if spec.steps is not None else 10
        p0 = spec.p if spec.p is not None else 4
        mesh = uniform_mesh_1d(*prob.domain, cells, p0)
        for _ in range(steps):
            try:
                disc, rep, fn, err = lvpp_level(mesh)
            except Exception as exc:
                rows.append(_fail_row(exc))
                break
            rows.append(_lvpp_row(mesh.widths, mesh.degrees, disc.ndof_u,
                                  rep, err))
            tol = rep.outer_increment / rep.alpha_last
            rs = h_refine_step(fn, rep.multiplier, disc.psi_space, prob.f,
                               prob.phi, delta=0.3, lam_tol=tol)
            mesh = Mesh1D(rs.mesh.points, rs.mesh.degrees + 1)
    elif spec.strategy == "hp-adaptive":
        cells = spec.cells if spec.cells is not None else 20
        steps = spec.steps if spec.steps is not None else 14
        p0 = spec.p if spec.p is not None else 8
        mesh = uniform_mesh_1d(*prob.domain, cells, p0)
        for _ in range(steps):
            try:
                disc, rep, fn, err = lvpp_level(mesh)
            except Exception as exc:
                rows.append(_fail_row(exc))
                break
            rows.append(_lvpp_row(mesh.widths, mesh.degrees, disc.ndof_u,
                                  rep, err))
            tol = rep.outer_increment / rep.alpha_last
            rs = hp_refine_step(fn, rep.multiplier, disc.psi_space, prob.f,
                                prob.phi, sigma=0.8, delta=0.7, lam_tol=tol)
            mesh = rs.mesh
    else:
        raise ValueError(f"strategy {spec.strategy!r} needs p = 1 on this "
                         "problem")
    return rows


def _ref_fn_2d(path):
    if path is None:
        return None
    data = np.load(path, allow_pickle=False)
    mesh = TensorMesh2D(Mesh1D(data["points_x"], data["degrees_x"]),
                        Mesh1D(data["points_y"], data["degrees_y"]))
    return FemFunction2D(USpace2D(mesh), data["coefs"])


def _err_2d(fn, ref):
    if ref is None:
        return math.nan
    return h1_error_2d(fn, ref)[0]


def _study_obstacle2d(spec):
    prob = BesselObstacle2D()
    sched = _alpha_schedule(spec, 2.0 ** -7, math.sqrt(2.0), 2.0 ** -3)
    beta = spec.beta if spec.beta is not None else 0.0
    # direct solves unless a Krylov tolerance is requested
    if spec.rtol is None:
        opts = SolverOptions(linear_solver="monolithic",
                             newton_rtol=1.2e-3, newton_atol=1e-13)
    else:
        opts = SolverOptions(linear_solver="schur", gmres_rtol=spec.rtol,
                             newton_rtol=1.2e-3, newton_atol=1e-13)
    ref = _ref_fn_2d(spec.ref)
    cells = spec.cells if spec.cells is not None else 10
    steps = spec.steps if spec.steps is not None else 3
    p = spec.p if spec.p is not None else (1 if spec.strategy == "h-uniform"
                                           else 2)

    def levels():
        if spec.strategy == "h-uniform":
            return [(cells * 2 ** k, p) for k in range(steps)]
        if spec.strategy == "p-uniform":
            return [(cells, p + k) for k in range(steps)]
        if spec.strategy == "hp-uniform":
            return [(cells * 2 ** k, p + k) for k in range(steps)]
        raise ValueError(f"strategy {spec.strategy!r} not available on "
                         "obstacle2d-bessel")

    rows = []
    for n, pk in levels():
        mesh = uniform_mesh_2d(0.0, 1.0, n, pk)
        hs = np.concatenate([mesh.mesh_x.widths, mesh.mesh_y.widths])
        ps = np.concatenate([mesh.degrees_x, mesh.degrees_y])
        if pk == 1:
            try:
                res = pdas_solve_2d(mesh, prob.f, prob.phi)
            except Exception as exc:
                rows.append(_fail_row(exc))
                break
            fn = FemFunction2D(USpace2D(mesh), res.u)
            rows.append(_pdas_row(hs, (n + 1) ** 2 - 4 * n,
                                  res, _err_2d(fn, ref)))
            continue
        try:
            disc = ObstacleDisc2D(mesh, f=prob.f, phi=prob.phi)
            rep = solve(disc, sched, beta=beta, opts=opts)
        except Exception as exc:
            rows.append(_fail_row(exc))
            break
        fn = FemFunction2D(disc.u_space, disc.u_space.extend_interior(rep.u))
        rows.append(_lvpp_row(hs, ps, disc.ndof_u, rep, _err_2d(fn, ref)))
    return rows


def _gradient_beta(spec, n, p):
    """Degree- and mesh-dependent stabilization 10^(-p + log2 h)."""
    if spec.beta is not None:
        return spec.beta
    return 10.0 ** (-p + math.log2(1.0 / n))


def _study_gradient2d(spec):
    prob = GradientFrame2D()
    sched = _alpha_schedule(spec, 2.0 ** -7, math.sqrt(2.0), 2.0 ** 2)
    opts = SolverOptions(newton_rtol=3e-5, newton_atol=1e-13,
                         gmres_rtol=spec.rtol if spec.rtol is not None
                         else 1e-3)
    ref = _ref_fn_2d(spec.ref)
    cells = spec.cells if spec.cells is not None else \
        (8 if spec.strategy == "p-uniform" else 4)
    steps = spec.steps if spec.steps is not None else 3
    p = spec.p if spec.p is not None else 2

    def levels():
        if spec.strategy == "h-uniform":
            return [(cells * 2 ** k, p) for k in range(steps)]
        if spec.strategy == "p-uniform":
            return [(cells, p + k) for k in range(steps)]
        if spec.strategy == "hp-uniform":
            return [(cells * 2 ** k, p + k) for k in range(steps)]
        raise ValueError(f"strategy {spec.strategy!r} not available on "
                         "gradient2d")

    rows = []
    for n, pk in levels():
        mesh = uniform_mesh_2d(0.0, 1.0, n, pk)
        hs = np.concatenate([mesh.mesh_x.widths, mesh.mesh_y.widths])
        ps = np.concatenate([mesh.degrees_x, mesh.degrees_y])
        try:
            # quadrature grids touch cell edges; midpoint sampling keeps
            # the piecewise obstacle single-valued per cell
            disc = GradientDisc2D(mesh, f=prob.f, phi=prob.phi,
                                  phi_mode="cellwise")
            rep = solve(disc, sched, beta=_gradient_beta(spec, n, pk),
                        opts=opts)
        except Exception as exc:
            rows.append(_fail_row(exc))
            break
        fn = FemFunction2D(disc.u_space, disc.u_space.extend_interior(rep.u))
        rows.append(_lvpp_row(hs, ps, disc.ndof_u, rep, _err_2d(fn, ref)))
    return rows


def run_study(spec, out):
    spec.validate()
    runner = {"obstacle1d-oscillatory": _study_obstacle1d,
              "obstacle2d-bessel": _study_obstacle2d,
              "gradient2d": _study_gradient2d}.get(spec.problem)
    if runner is None:
        raise ValueError(f"problem {spec.problem!r} has no study runner; "
                         "use the thermoform subcommand for thermoforming")
    rows = runner(spec)
    _write_csv(out, STUDY_COLUMNS, rows)
    ok = [r for r in rows if r["status"] == "ok"
          and np.isfinite(r["H1_error"])]
    summary = {}
    if len(ok) >= 2:
        summary["rate"] = ls_rate([r["dofs"] for r in ok],
                                  [r["H1_error"] for r in ok])
    _write_sidecar(out, spec, rows, summary)
    return rows


# ---------------------------------------------------- preconditioner bench

def _zero_blocks(disc):
    blocks = [np.zeros((idx.size, idx.size)) for idx in disc.cell_psi_indices]
    return CellBlockMatrix(blocks, disc.cell_psi_indices, disc.ndof_psi,
                           clamped=False)


def bench_case(disc, beta, rtol=1e-6, maxiter=400):
    """GMRES on S x = 1 with the cellwise surrogate preconditioner.

    The Schur complement is taken at alpha = 1 with the state-dependent
    block zeroed, isolating the constraint coupling the preconditioner
    has to capture.
    """
    t0 = time.perf_counter()
    A_factor = linalg.factor_stiffness(disc.A, "auto", disc.dim)
    D = _zero_blocks(disc)
    E = disc.E_matrix(beta)
    S = linalg.SchurOperator(disc, D, E, 1.0, A_factor)
    precond = linalg.schur_preconditioner(disc, D, 1.0, beta)
    t_factor = time.perf_counter() - t0
    b = np.ones(disc.ndof_psi)
    res = linalg.gmres(S.matvec, b, M=precond.apply, side="left", rtol=rtol,
                       maxiter=maxiter)
    return res, t_factor


def bench_preconditioner(kind, ps, cells_list, beta=None, rtol=1e-6,
                         out=None):
    rows = []
    for cells in cells_list:
        for p in ps:
            if kind == "obstacle1d":
                mesh = uniform_mesh_1d(0.0, 1.0, cells, p)
                disc = ObstacleDisc1D(mesh, f=0.0, phi=0.0)
                b = 0.0 if beta is None else beta
                dim = 1
            elif kind == "obstacle2d":
                mesh = uniform_mesh_2d(0.0, 1.0, cells, p)
                disc = ObstacleDisc2D(mesh, f=0.0, phi=0.0)
                b = 0.0 if beta is None else beta
                dim = 2
            elif kind == "gradient1d":
                mesh = uniform_mesh_1d(0.0, 1.0, cells, p)
                disc = GradientDisc1D(mesh, f=0.0, phi=1.0)
                b = 1e-5 if beta is None else beta
                dim = 1
            elif kind == "gradient2d":
                mesh = uniform_mesh_2d(0.0, 1.0, cells, p)
                disc = GradientDisc2D(mesh, f=0.0, phi=1.0)
                b = 1e-5 if beta is None else beta
                dim = 2
            else:
                raise ValueError(f"unknown bench kind {kind!r}")
            res, t_factor = bench_case(disc, b, rtol=rtol)
            rows.append({"problem": kind, "dim": dim, "cells": cells,
                         "p": p, "beta": b, "iterations": res.iterations,
                         "converged": res.converged, "t_factor_s": t_factor})
    if out is not None:
        _write_csv(out, BENCH_COLUMNS, rows)
    return rows


# ------------------------------------------------------------- references

def _solve_obstacle2d_ref(cells, p, rtol):
    prob = BesselObstacle2D()
    mesh = uniform_mesh_2d(0.0, 1.0, cells, p)
    disc = ObstacleDisc2D(mesh, f=prob.f, phi=prob.phi)
    sched = AlphaSchedule(2.0 ** -7, rate=math.sqrt(2.0), alpha_max=2.0 ** -3)
    # references solve tighter than studies; the Krylov tolerance floors
    # the reachable Newton residual, so keep a decade between them
    opts = SolverOptions(gmres_rtol=rtol, newton_rtol=1e-6,
                         newton_atol=1e-13)
    rep = solve(disc, sched, beta=0.0, opts=opts)
    if not rep.converged:
        raise RuntimeError("reference solve did not converge")
    return FemFunction2D(disc.u_space, disc.u_space.extend_interior(rep.u))


def _solve_gradient2d_ref(cells, p, rtol):
    prob = GradientFrame2D()
    mesh = uniform_mesh_2d(0.0, 1.0, cells, p)
    disc = GradientDisc2D(mesh, f=prob.f, phi=prob.phi, phi_mode="cellwise")
    sched = AlphaSchedule(2.0 ** -7, rate=math.sqrt(2.0), alpha_max=2.0 ** 2)
    opts = SolverOptions(newton_rtol=1e-6, newton_atol=1e-13, gmres_rtol=rtol)
    rep = solve(disc, sched, beta=10.0 ** (-p - math.log2(cells)), opts=opts)
    if not rep.converged:
        raise RuntimeError("reference solve did not converge")
    return FemFunction2D(disc.u_space, disc.u_space.extend_interior(rep.u))


def make_reference(spec, out):
    """Solve at the requested level and one level below; the H1 distance
    between the two is stored as a trust indicator for the reference."""
    if spec.problem == "obstacle1d-oscillatory":
        prob = OscillatoryObstacle1D()
        sub = ProblemSpec(problem=spec.problem, strategy="hp-adaptive",
                          steps=spec.steps, cells=spec.cells, p=spec.p)
        mesh = uniform_mesh_1d(*prob.domain,
                               sub.cells if sub.cells is not None else 20,
                               sub.p if sub.p is not None else 8)
        steps = sub.steps if sub.steps is not None else 14
        sched = AlphaSchedule(2.0 ** -7, rate=math.sqrt(2.0),
                              alpha_max=2.0 ** -3)
        fn = prev = None
        for _ in range(steps):
            disc = ObstacleDisc1D(mesh, f=prob.f, phi=prob.phi)
            rep = solve(disc, sched, beta=1e-8)
            prev = fn
            fn = FemFunction1D(disc.u_space,
                               disc.u_space.extend_interior(rep.u))
            tol = rep.outer_increment / rep.alpha_last
            rs = hp_refine_step(fn, rep.multiplier, disc.psi_space, prob.f,
                                prob.phi, sigma=0.8, delta=0.7, lam_tol=tol)
            mesh = rs.mesh
        trust = _h1_distance_1d(fn, prev) if prev is not None else math.nan
        m = fn.space.mesh
        np.savez(out, kind="obstacle1d", points=m.points,
                 degrees=m.degrees, coefs=fn.coefs, trust=trust)
        return trust

    rtol = spec.rtol if spec.rtol is not None else 1e-8
    if spec.problem == "obstacle2d-bessel":
        cells = spec.cells if spec.cells is not None else 10
        p = spec.p if spec.p is not None else 8
        solve_ref = _solve_obstacle2d_ref
    elif spec.problem == "gradient2d":
        cells = spec.cells if spec.cells is not None else 8
        p = spec.p if spec.p is not None else 8
        solve_ref = _solve_gradient2d_ref
    else:
        raise ValueError(f"no reference generator for {spec.problem!r}")
    coarse = solve_ref(cells, p - 1, rtol)
    fine = solve_ref(cells, p, rtol)
    trust = h1_error_2d(coarse, fine)[0]
    m = fine.space.mesh
    np.savez(out, kind=spec.problem, points_x=m.mesh_x.points,
             degrees_x=m.mesh_x.degrees, points_y=m.mesh_y.points,
             degrees_y=m.mesh_y.degrees, coefs=fine.coefs, trust=trust)
    return trust


def _h1_distance_1d(fn, other, extra=10):
    return h1_error_1d(fn, other.eval, other.deriv, extra=extra)[0]


def load_reference_1d(path):
    data = np.load(path, allow_pickle=False)
    mesh = Mesh1D(data["points"], data["degrees"])
    return FemFunction1D(USpace1D(mesh), data["coefs"]), float(data["trust"])


# ------------------------------------------------------------ thermoform

def run_thermoform(ps, cells, out, tol_fp=3e-3):
    data = ThermoformingData()
    rows = []
    for p in ps:
        mesh = uniform_mesh_2d(0.0, 1.0, cells, p)
        try:
            u, T, rep = thermoform_solve(data, mesh, tol_fp=tol_fp)
        except Exception as exc:
            rows.append({c: math.nan for c in THERMOFORM_COLUMNS}
                        | {"p": p, "status": f"failed:{type(exc).__name__}"})
            continue
        rows.append({"p": p, "fixed_point": rep.fixed_point_count,
                     "avg_newton_step1": rep.avg_newton_obstacle,
                     "avg_gmres_step1": rep.avg_gmres_obstacle,
                     "avg_newton_step2": rep.avg_newton_temp,
                     "avg_gmres_step2": rep.avg_gmres_temp,
                     "status": "ok" if rep.converged else "failed:fixedpoint"})
    if out is not None:
        _write_csv(out, THERMOFORM_COLUMNS, rows)
    return rows


# -------------------------------------------------------------- plumbing

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _jsonable(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _write_sidecar(path, spec, rows, summary):
    side = str(path)
    side = side[:-4] + ".json" if side.endswith(".csv") else side + ".json"
    payload = {"spec": asdict(spec), "summary": summary,
               "rows": [{k: _jsonable(v) for k, v in r.items()}
                        for r in rows]}
    with open(side, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t != ""]


def build_parser():
    ap = argparse.ArgumentParser(prog="hpg")
    sub = ap.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run a refinement study")
    st.add_argument("--problem", required=True, choices=PROBLEMS)
    st.add_argument("--strategy", default="h-uniform", choices=STRATEGIES)
    st.add_argument("--p", type=int)
    st.add_argument("--cells", type=int)
    st.add_argument("--steps", type=int)
    st.add_argument("--alpha0", type=float)
    st.add_argument("--alpha-rate", type=float, dest="alpha_rate")
    st.add_argument("--alpha-max", type=float, dest="alpha_max")
    st.add_argument("--beta", type=float)
    st.add_argument("--rtol", type=float)
    st.add_argument("--ref", help="reference solution (.npz) for 2D errors")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", required=True)
    st.add_argument("--config", help="JSON file with ProblemSpec fields; "
                    "explicit flags win")

    bench = sub.add_parser("bench-precond",
                           help="latent Schur preconditioner benchmark")
    bench.add_argument("--problem", default="obstacle1d",
                       choices=("obstacle1d", "obstacle2d", "gradient1d",
                                "gradient2d"))
    bench.add_argument("--p", default="4,8,16", type=_int_list)
    bench.add_argument("--cells", default="10", type=_int_list)
    bench.add_argument("--beta", type=float)
    bench.add_argument("--rtol", type=float, default=1e-6)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True)

    mk = sub.add_parser("make-ref", help="store a refined reference solve")
    mk.add_argument("--problem", required=True, choices=PROBLEMS[:3])
    mk.add_argument("--p", type=int)
    mk.add_argument("--cells", type=int)
    mk.add_argument("--steps", type=int)
    mk.add_argument("--rtol", type=float)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", required=True)

    tf = sub.add_parser("thermoform", help="membrane/mould fixed point")
    tf.add_argument("--p", default="6,12", type=_int_list)
    tf.add_argument("--cells", type=int, default=4)
    tf.add_argument("--rtol", type=float, default=3e-3)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--out", required=True)
    return ap


def _spec_from_args(args):
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    fields = ("problem", "strategy", "p", "cells", "steps", "alpha0",
              "alpha_rate", "alpha_max", "beta", "rtol", "seed", "ref")
    for f in fields:
        v = getattr(args, f, None)
        if v is not None:
            base[f] = v
    return ProblemSpec(**base)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "study":
        rows = run_study(_spec_from_args(args), args.out)
        bad = [r for r in rows if r["status"] != "ok"]
        print(f"{len(rows)} levels -> {args.out}"
              + (f" ({len(bad)} failed)" if bad else ""))
        return 1 if bad else 0
    if args.command == "bench-precond":
        rows = bench_preconditioner(args.problem, args.p, args.cells,
                                    beta=args.beta, rtol=args.rtol,
                                    out=args.out)
        print(f"{len(rows)} configurations -> {args.out}")
        return 0
    if args.command == "make-ref":
        spec = ProblemSpec(problem=args.problem, p=args.p, cells=args.cells,
                           steps=args.steps, rtol=args.rtol, seed=args.seed)
        trust = make_reference(spec, args.out)
        print(f"reference -> {args.out} (trust {trust:.3e})")
        return 0
    if args.command == "thermoform":
        rows = run_thermoform(args.p, args.cells, args.out, tol_fp=args.rtol)
        bad = [r for r in rows if r["status"] != "ok"]
        print(f"{len(rows)} degrees -> {args.out}"
              + (f" ({len(bad)} failed)" if bad else ""))
        return 1 if bad else 0
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
