"""Joint displacement/phase increment: one step of the staggered scheme.

Each step minimizes a strictly convex incremental functional over (u, m):
elastic energy of eps(u) - eps_tr*m, the chemical energy phi1 at the frozen
previous concentration, the phase-gradient term, inertia and viscosity
differences, the rate-independent activation cost r|m - m_prev| and the box
constraint on m, plus the adiabatic couplings sigma_a, s_a frozen at the
previous phase/enthalpy pair.  The solver alternates an SPD displacement
solve (Jacobi-preconditioned CG) with an accelerated proximal-gradient pass
on m whose nonsmooth part is handled exactly by a nodal prox, and stops on
the joint first-order residual measured in the lumped dual norm.  The
normal-cone multiplier xi is recovered from the converged m-equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constitutive import (
    MaterialModel,
    dphi1_dm,
    inf_d2phi1_dmm,
    phi1,
    s_a,
    sigma_a,
)
from .errors import ConfigError, InvariantViolation, StepFailure
from .grid import (
    Mesh,
    coupling_force_matrix,
    elastic_stiffness,
    elem_mean,
    lumped_mass,
    mean_coupling_matrix,
    stiffness,
    strain_adjoint,
    vector_lumped_mass,
)

NEG_TOL = 1e-12


def tau_max(mat: MaterialModel, horizon: float) -> float:
    """Largest step size for which the incremental functional stays convex.

    The bound kicks in only when the phase energy loses convexity in m
    (double-well add-on); otherwise any step up to the horizon is fine.
    """
    curv = inf_d2phi1_dmm(mat)
    if curv < 0.0:
        return min(horizon, mat.alpha ** 2 / curv ** 2)
    return horizon


def phase_nodal_prox(a_quad, b, p, kappa, lo, hi):
    """Exact minimizer of (a_quad/2)(v-b)^2 + kappa|v-p| over [lo, hi].

    Shrink toward b by kappa/a_quad, stick at p inside the threshold band
    (band edges resolve toward sticking), then clip to the box.  All
    arguments broadcast; requires a_quad > 0, p in [lo, hi].
    """
    d = np.asarray(b, float) - p
    shift = np.asarray(kappa, float) / a_quad
    v = p + np.sign(d) * np.maximum(np.abs(d) - shift, 0.0)
    return np.clip(v, lo, hi)


@dataclass
class MechOperators:
    """Matrices reused across steps of one run (fixed mesh, material, tau)."""

    tau: float
    Mlump: np.ndarray
    Mvec: np.ndarray
    Kscal: sp.csr_matrix
    A_el: sp.csr_matrix
    A_visc: sp.csr_matrix
    B: sp.csr_matrix
    W: sp.csr_matrix
    A_u: sp.csr_matrix
    jacobi: np.ndarray
    lipschitz: float


def build_operators(mesh: Mesh, mat: MaterialModel, tau: float) -> MechOperators:
    Mlump = lumped_mass(mesh)
    Mvec = vector_lumped_mass(mesh)
    Kscal = stiffness(mesh, 1.0)
    A_el = elastic_stiffness(mesh, mat.lame)
    A_visc = elastic_stiffness(mesh, mat.visc)
    sig_unit = _transformation_stress(mat)
    B = coupling_force_matrix(mesh, sig_unit)
    W = mean_coupling_matrix(mesh, mat.eps_tr_C_eps_tr)
    A_u = (sp.diags(mat.rho / tau ** 2 * Mvec) + A_visc / tau + A_el).tocsr()
    jacobi = A_u.diagonal()
    # Gershgorin bound for the phase-block Hessian; the pointwise curvature
    # is taken over the extrapolation range [-1, 2] the accelerated steps
    # can visit, where the quartic well contributes at most 26*d0.
    curv_max = mat.coupling_k + 26.0 * mat.double_well
    H = (mat.grad_coeff * Kscal + W
         + sp.diags(Mlump * (mat.alpha / tau + curv_max))).tocsr()
    lipschitz = float(np.abs(H).sum(axis=1).max())
    return MechOperators(tau, Mlump, Mvec, Kscal, A_el, A_visc, B, W,
                         A_u, jacobi, lipschitz)


def _transformation_stress(mat: MaterialModel) -> np.ndarray:
    eps_tr = np.asarray(mat.eps_tr_mat, float)
    lam, mu = mat.lame
    return lam * np.trace(eps_tr) * np.eye(mat.dim) + 2.0 * mu * eps_tr


@dataclass
class MechPhaseProblem:
    """Frozen data of one displacement/phase increment.

    ``f`` and ``f_s`` are already-assembled nodal load vectors (body and
    surface); None means zero.  ``ops`` lets the time loop share the
    assembled matrices across steps.  ``opt_tol`` bounds the first-order
    residual relative to 1 + the dual norm of the step forcing, which
    coincides with an absolute bound for steps starting from rest.
    """

    mesh: Mesh
    mat: MaterialModel
    tau: float
    u_prev: np.ndarray
    u_prev2: np.ndarray
    m_prev: np.ndarray
    chi_prev: np.ndarray
    w_prev: np.ndarray
    f: np.ndarray | None = None
    f_s: np.ndarray | None = None
    cg_tol: float = 1e-12
    opt_tol: float = 1e-10
    opt_max: int = 200
    fista_max: int = 5000
    ops: MechOperators | None = field(default=None, repr=False)

    def operators(self) -> MechOperators:
        if self.ops is None or self.ops.tau != self.tau:
            self.ops = build_operators(self.mesh, self.mat, self.tau)
        return self.ops


@dataclass(frozen=True)
class MechPhaseSolution:
    u: np.ndarray
    m: np.ndarray
    xi: np.ndarray
    residual: float
    tolerance: float  # forcing-scaled bound the residual was tested against
    outer_iterations: int
    prox_iterations: int
    cg_iterations: int
    objective: float


def _pcg(A, b, x0, diag, rel_tol, max_iter):
    """Jacobi-preconditioned conjugate gradients, deterministic."""
    x = x0.copy()
    r = b - A @ x
    bnorm = np.sqrt(b @ b)
    stop = rel_tol * (bnorm if bnorm > 0.0 else 1.0)
    z = r / diag
    p = z.copy()
    rz = r @ z
    for it in range(max_iter):
        if np.sqrt(r @ r) <= stop:
            return x, it
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            break
        a = rz / pAp
        x += a * p
        r -= a * Ap
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.sqrt(r @ r) > stop:
        raise StepFailure(
            f"CG stalled at residual {np.sqrt(r @ r):.3e} (target {stop:.3e})")
    return x, max_iter


def _adiabatic_data(pr: MechPhaseProblem):
    """Element sigma_a force and nodal s_a values at the previous state."""
    mesh, mat = pr.mesh, pr.mat
    m_e = elem_mean(mesh, pr.m_prev)
    w_e = elem_mean(mesh, pr.w_prev)
    sig = sigma_a(mat, m_e, w_e)
    if mesh.dim == 1:
        sig = np.asarray(sig).reshape(-1, 1, 1)
    sa_force = strain_adjoint(mesh, sig)
    sa_node = s_a(mat, pr.m_prev, pr.w_prev)
    return sa_force, np.broadcast_to(np.asarray(sa_node, float),
                                     pr.m_prev.shape).copy()


def _m_smooth_grad(pr, ops, m, Bu, sa_node):
    mat = pr.mat
    return (mat.grad_coeff * (ops.Kscal @ m) + ops.W @ m - Bu
            + ops.Mlump * (dphi1_dm(mat, m, pr.chi_prev)
                           + (mat.alpha / pr.tau) * (m - pr.m_prev)
                           + sa_node))


def _m_residual(g, m, m_prev, Mlump, r, lo, hi):
    """Nodal distance of -g to the activation+normal-cone subdifferential."""
    delta = m - m_prev
    lo_band = np.where(delta > 0, r, -r)
    hi_band = np.where(delta < 0, -r, r)
    lo_tot = np.where(m <= lo, -np.inf, lo_band)
    hi_tot = np.where(m >= hi, np.inf, hi_band)
    target = -g / Mlump
    return Mlump * np.maximum(0.0, np.maximum(lo_tot - target,
                                              target - hi_tot))


def _solve_m_block(pr, ops, u, m_start, sa_node, tol, max_iter):
    mat = pr.mat
    Bu = ops.B.T @ u
    L = ops.lipschitz
    kappa = ops.Mlump * mat.threshold_r
    lo, hi = mat.m_lo, mat.m_hi
    m = np.clip(m_start, lo, hi)
    y = m.copy()
    t_acc = 1.0
    for it in range(1, max_iter + 1):
        g_y = _m_smooth_grad(pr, ops, y, Bu, sa_node)
        m_new = phase_nodal_prox(L, y - g_y / L, pr.m_prev, kappa, lo, hi)
        if (y - m_new) @ (m_new - m) > 0.0:
            # momentum points uphill: restart from the last iterate
            t_acc = 1.0
            g_y = _m_smooth_grad(pr, ops, m, Bu, sa_node)
            m_new = phase_nodal_prox(L, m - g_y / L, pr.m_prev, kappa, lo, hi)
            y = m.copy()
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc ** 2))
        y = m_new + ((t_acc - 1.0) / t_next) * (m_new - m)
        m, t_acc = m_new, t_next
        g = _m_smooth_grad(pr, ops, m, Bu, sa_node)
        res = _m_residual(g, m, pr.m_prev, ops.Mlump, mat.threshold_r, lo, hi)
        if np.sqrt(np.sum(res ** 2 / ops.Mlump)) <= tol:
            return m, g, it
    return m, g, max_iter


def _u_rhs_base(pr, ops, sa_force):
    mat = pr.mat
    b = (mat.rho / pr.tau ** 2) * ops.Mvec * (2.0 * pr.u_prev - pr.u_prev2)
    b += (ops.A_visc @ pr.u_prev) / pr.tau
    b -= sa_force
    if pr.f is not None:
        b = b + pr.f
    if pr.f_s is not None:
        b = b + pr.f_s
    return b


def incremental_objective(pr: MechPhaseProblem, u: np.ndarray,
                          m: np.ndarray) -> float:
    """Value of the step functional; +inf outside the phase box."""
    mat = pr.mat
    ops = pr.operators()
    if np.any(m < mat.m_lo) or np.any(m > mat.m_hi):
        return np.inf
    sa_force, sa_node = _adiabatic_data(pr)
    acc = u - 2.0 * pr.u_prev + pr.u_prev2
    du = u - pr.u_prev
    dm = m - pr.m_prev
    val = 0.5 * mat.rho / pr.tau ** 2 * np.sum(ops.Mvec * acc ** 2)
    val += 0.5 / pr.tau * (du @ (ops.A_visc @ du))
    val += 0.5 * (u @ (ops.A_el @ u)) - u @ (ops.B @ m)
    val += 0.5 * (m @ (ops.W @ m))
    val += 0.5 * mat.grad_coeff * (m @ (ops.Kscal @ m))
    val += np.sum(ops.Mlump * (phi1(mat, m, pr.chi_prev)
                               + 0.5 * mat.alpha / pr.tau * dm ** 2
                               + mat.threshold_r * np.abs(dm)
                               + sa_node * m))
    val += sa_force @ u
    if pr.f is not None:
        val -= pr.f @ u
    if pr.f_s is not None:
        val -= pr.f_s @ u
    return float(val)


def _recover_xi(g, m, m_prev, Mlump, r, lo, hi):
    delta = m - m_prev
    if r > 0.0:
        slack_eta = np.clip(-g / (Mlump * r), -1.0, 1.0)
    else:
        slack_eta = np.zeros_like(g)
    eta = np.where(delta > 0, 1.0, np.where(delta < 0, -1.0, slack_eta))
    xi = -(g / Mlump + r * eta)
    xi[(m > lo) & (m < hi)] = 0.0
    return xi


def solve_mech_phase_step(pr: MechPhaseProblem) -> MechPhaseSolution:
    mat = pr.mat
    if np.min(pr.chi_prev) < -NEG_TOL:
        raise InvariantViolation("previous concentration has negative nodes")
    if np.min(pr.w_prev) < -NEG_TOL:
        raise InvariantViolation("previous enthalpy has negative nodes")
    curv = inf_d2phi1_dmm(mat)
    if curv < 0.0 and pr.tau > mat.alpha ** 2 / curv ** 2 * (1.0 + 1e-12):
        raise ConfigError(
            f"step {pr.tau:g} exceeds the convexity threshold (4.6) "
            f"{mat.alpha ** 2 / curv ** 2:g} for this material")
    if mat.alpha / pr.tau + curv < 0.0:
        raise StepFailure(
            "nodal phase curvature alpha/tau + min d2phi1/dm2 is negative; "
            "the proximal solver needs a convex smooth part")

    ops = pr.operators()
    sa_force, sa_node = _adiabatic_data(pr)
    b_base = _u_rhs_base(pr, ops, sa_force)
    cg_max = 200 + 10 * ops.Mvec.size

    # stopping is relative to the forcing magnitude: the inertial part of
    # b_base scales like rho/tau^2, so an absolute test would demand more
    # accuracy than the inner CG can deliver in double precision
    scale = 1.0 + float(np.sqrt(np.sum(b_base ** 2 / ops.Mvec)))
    tol_eff = pr.opt_tol * scale

    u = pr.u_prev.copy()
    m = pr.m_prev.copy()
    cg_total = 0
    prox_total = 0
    residual = np.inf
    for outer in range(1, pr.opt_max + 1):
        b_u = b_base + ops.B @ m
        u, cg_it = _pcg(ops.A_u, b_u, u, ops.jacobi, pr.cg_tol, cg_max)
        cg_total += cg_it
        m, g, fista_it = _solve_m_block(pr, ops, u, m, sa_node,
                                        0.5 * tol_eff, pr.fista_max)
        prox_total += fista_it
        r_u = ops.A_u @ u - (b_base + ops.B @ m)
        r_m = _m_residual(g, m, pr.m_prev, ops.Mlump, mat.threshold_r,
                          mat.m_lo, mat.m_hi)
        residual = float(np.sqrt(np.sum(r_u ** 2 / ops.Mvec)
                                 + np.sum(r_m ** 2 / ops.Mlump)))
        if residual <= tol_eff:
            break
    else:
        raise StepFailure(
            f"displacement/phase alternation stalled: residual {residual:.3e}"
            f" > {tol_eff:.3e} after {pr.opt_max} sweeps "
            f"({cg_total} CG, {prox_total} prox iterations)")

    xi = _recover_xi(g, m, pr.m_prev, ops.Mlump, mat.threshold_r,
                     mat.m_lo, mat.m_hi)
    obj = incremental_objective(pr, u, m)
    return MechPhaseSolution(u=u, m=m, xi=xi, residual=residual,
                             tolerance=tol_eff,
                             outer_iterations=outer, prox_iterations=prox_total,
                             cg_iterations=cg_total, objective=obj)
