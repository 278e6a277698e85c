"""1D hp-adaptivity: cell error estimators, analyticity fit, refinement step.

The default indicator measures the residual of the limiting variational
inequality; an alternative built from the proximal subsystem is available
behind a flag but performs worse in practice and is not the default.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import legder

from .assembly import CellKernel1D, _clamped_exp_neg, _eval_data

COEF_FLOOR = 1e-300
MIN_FIT_POINTS = 3


@dataclass(frozen=True)
class CellEstimate:
    """Squared local error contributions of one cell.

    ``residual`` and ``obstacle_projection`` enter unsquared (their norms
    are taken to the first power); they are still nonnegative summands.
    """

    cell: int
    residual: float
    data_oscillation: float
    obstacle_projection: float
    complementarity: float
    infeasibility: float

    @property
    def eta1_sq(self):
        return self.residual + self.data_oscillation + self.obstacle_projection

    @property
    def eta_sq(self):
        return self.eta1_sq + self.complementarity + self.infeasibility


@dataclass(frozen=True)
class AnalyticityFit:
    """Least-squares decay rate of the cell Legendre coefficients."""

    slope: float
    intercept: float
    degenerate: bool = False

    @property
    def indicator(self):
        return math.exp(-self.slope)


def _cell_pieces(u, psi_space, i, f, phi, f_mode, phi_mode):
    mesh = u.space.mesh
    p = int(mesh.degrees[i])
    q = int(psi_space.degrees[i])
    k = CellKernel1D(mesh.points[i], mesh.points[i + 1], p, q)
    h = mesh.widths[i]
    u_leg = u.cell_legendre(i)
    f_vals = _eval_data(f, k, f_mode, 1)
    phi_vals = _eval_data(phi, k, phi_mode, 1)
    f_hp = k.T @ f_vals
    phi_hp = k.T @ phi_vals
    return k, h, p, q, u_leg, f_vals, phi_vals, f_hp, phi_hp


def _coef_l2_sq(coefs, h):
    j = np.arange(coefs.size)
    return float(np.sum(coefs * coefs * h / (2.0 * j + 1.0)))


def _grid_l2_sq(k, vals, h):
    # coefficient 0 of the analysis is half the reference-cell integral
    return float(h * (k.T[0] @ (vals * vals)))


def estimate_error(u, lam, psi_space, f, phi, f_mode="pointwise",
                   phi_mode="pointwise", lam_tol=0.0):
    """Per-cell estimates for the obstacle problem.

    ``u`` is the primal solution, ``lam`` the multiplier coefficients in
    ``psi_space`` (low-order baselines pass their own projection space).
    A truncated penalty continuation leaves a uniform residue in the
    multiplier; on cells where max |lam| stays below ``lam_tol`` the
    complementarity term would measure that residue rather than the
    discretization, so it is dropped there.  Contact multipliers scale
    with the load and sit far above any sensible tolerance.
    Polynomial terms are integrated exactly through coefficient sums; data
    terms by projection quadrature on the oversampled cell grid.
    """
    mesh = u.space.mesh
    out = []
    for i in range(mesh.ncells):
        k, h, p, q, u_leg, f_vals, phi_vals, f_hp, phi_hp = _cell_pieces(
            u, psi_space, i, f, phi, f_mode, phi_mode)
        lam_c = lam[psi_space.cell_dofs(i)]

        # strong residual f_hp + u'' + lam, all Legendre coefficients
        n = max(q + 1, p - 1, 1)
        r = np.zeros(n)
        r[:q + 1] += f_hp + lam_c
        if p >= 2:
            ddu = legder(u_leg, 2) * (2.0 / h) ** 2
            r[:ddu.size] += ddu
        scale = h * h / (p * p)
        residual = scale * math.sqrt(_coef_l2_sq(r, h))

        f_err = f_vals - k.S @ f_hp
        data_osc = scale * _grid_l2_sq(k, f_err, h)

        phi_err = phi_vals - k.S @ phi_hp
        obstacle_proj = math.sqrt(_grid_l2_sq(k, phi_err, h))

        # u modes above degree q are orthogonal to lam on the cell
        gap = phi_hp.copy()
        m = min(q + 1, p + 1)
        gap[:m] -= u_leg[:m]
        jw = h / (2.0 * np.arange(q + 1) + 1.0)
        if lam_tol > 0.0 and np.abs(k.S @ lam_c).max() < lam_tol:
            complementarity = 0.0
        else:
            complementarity = abs(float(np.sum(lam_c * gap * jw)))

        defect = np.minimum(k.S @ phi_hp - k.Su @ u_leg, 0.0)
        infeasibility = _grid_l2_sq(k, defect, h)

        out.append(CellEstimate(i, residual, data_osc, obstacle_proj,
                                complementarity, infeasibility))
    return out


def proximal_indicator(u, psi, lam, psi_space, f, phi, alpha,
                       f_mode="pointwise", phi_mode="pointwise", lam_tol=0.0):
    """Alternative per-cell eta^2 from the proximal subsystem:
    alpha^2 eta_1^2 + ||u + e^{-psi} - phi_hp||^2."""
    ests = estimate_error(u, lam, psi_space, f, phi, f_mode, phi_mode, lam_tol)
    mesh = u.space.mesh
    vals = np.empty(mesh.ncells)
    for i, est in enumerate(ests):
        k, h, p, q, u_leg, _, phi_vals, _, phi_hp = _cell_pieces(
            u, psi_space, i, f, phi, f_mode, phi_mode)
        exp_vals, _ = _clamped_exp_neg(k.S @ psi[psi_space.cell_dofs(i)])
        misfit = k.Su @ u_leg + exp_vals - k.S @ phi_hp
        vals[i] = alpha * alpha * est.eta1_sq + _grid_l2_sq(k, misfit, h)
    return vals


def analyticity(u, cell):
    """Fit log|a_j| ~ -m j + b over the re-expanded cell coefficients
    j = 0..p+1; the indicator e^{-m} is small for analytic behaviour.

    Coefficients below the floor are excluded; fewer than three usable
    points yields the degenerate fit (indicator 1, h-refinement only).
    """
    coefs = u.cell_legendre(cell, pad=1)
    mags = np.abs(coefs)
    keep = mags >= COEF_FLOOR
    if np.count_nonzero(keep) < MIN_FIT_POINTS:
        return AnalyticityFit(0.0, 0.0, degenerate=True)
    j = np.nonzero(keep)[0].astype(float)
    slope, intercept = np.polyfit(j, np.log(mags[keep]), 1)
    return AnalyticityFit(-slope, intercept)


@dataclass(frozen=True)
class RefineStep:
    mesh: object
    estimates: list
    marked: tuple
    p_marked: tuple

    @property
    def eta_sq_total(self):
        return sum(e.eta_sq for e in self.estimates)


def h_refine_step(u, lam, psi_space, f, phi, delta,
                  f_mode="pointwise", phi_mode="pointwise", lam_tol=0.0):
    """Marking pass that only bisects, never touches degrees."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    estimates = estimate_error(u, lam, psi_space, f, phi, f_mode, phi_mode,
                               lam_tol)
    eta = np.sqrt([e.eta_sq for e in estimates])
    top = eta.max() if eta.size else 0.0
    marked = (tuple(int(i) for i in np.nonzero(eta >= delta * top)[0])
              if top > 0.0 else ())
    return RefineStep(u.space.mesh.refine(marked), estimates, marked, ())


def hp_refine_step(u, lam, psi_space, f, phi, sigma, delta,
                   f_mode="pointwise", phi_mode="pointwise",
                   indicator="limit", psi=None, alpha=None, lam_tol=0.0):
    """One marking/refinement pass.

    Cells with eta >= delta * max eta are bisected; among them, those whose
    analyticity indicator falls below sigma get their children's degree
    incremented.  A zero maximum marks nothing.
    """
    if not 0.0 < sigma < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("sigma and delta must lie in (0, 1)")
    estimates = estimate_error(u, lam, psi_space, f, phi, f_mode, phi_mode,
                               lam_tol)
    if indicator == "proximal":
        eta = np.sqrt(proximal_indicator(u, psi, lam, psi_space, f, phi,
                                         alpha, f_mode, phi_mode, lam_tol))
    elif indicator == "limit":
        eta = np.sqrt([e.eta_sq for e in estimates])
    else:
        raise ValueError(f"unknown indicator {indicator!r}")
    top = eta.max() if eta.size else 0.0
    if top <= 0.0:
        marked, p_marked = (), ()
    else:
        marked = tuple(int(i) for i in np.nonzero(eta >= delta * top)[0])
        p_marked = tuple(i for i in marked
                         if analyticity(u, i).indicator < sigma)
    mesh = u.space.mesh.refine(marked, bump_degree=p_marked)
    return RefineStep(mesh, estimates, marked, p_marked)
