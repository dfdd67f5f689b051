"""Hydrogen concentration step: a semilinear diffusion solve.

With the chemical potential eliminated through its chain rule, the update
is a lumped P1 system whose mobility-weighted coefficients depend on the
unknown concentration itself.  A damped Picard loop freezes those
coefficients at the current linearization state; each inner system is
solved exactly (sparse direct), and the returned iterate is the raw output
of the final solve, so testing the system with the constant function gives
the discrete hydrogen balance to solver precision: the lumped mass of chi
moves by exactly tau times the boundary influx.  Non-negativity of chi is
asserted, never clipped - clipping would falsify that balance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import MaterialModel, chemical_potential, transport_coeffs
from .errors import InvariantViolation, StepFailure
from .grid import (
    Mesh,
    elem_mean,
    grad_field,
    grad_stiffness_vector,
    lumped_mass,
    stiffness_with_diag,
    strain,
)

log = logging.getLogger(__name__)

NEG_TOL = 1e-12


@dataclass
class DiffusionProblem:
    """Frozen data of one concentration increment.

    ``h_s`` is the already-assembled nodal boundary-influx vector; None
    means an isolated specimen.
    """

    mesh: Mesh
    mat: MaterialModel
    tau: float
    u: np.ndarray
    m: np.ndarray
    chi_prev: np.ndarray
    w_prev: np.ndarray
    h_s: np.ndarray | None = None
    picard_damping: float = 0.7
    picard_tol: float = 1e-10
    picard_max: int = 200


@dataclass(frozen=True)
class DiffusionSolution:
    chi: np.ndarray
    mu: np.ndarray
    grad_mu: np.ndarray
    iterations: int
    update_norm: float


def assemble_mu(mesh: Mesh, mat: MaterialModel, m: np.ndarray,
                chi: np.ndarray):
    """Nodal chemical potential and its element gradient.

    The gradient uses the chain rule d2cc*grad(chi) + d2cm*grad(m) with
    the curvature coefficients at element midpoint values, matching the
    flux assembly of the solver.
    """
    from .constitutive import d2phi1_dchichi, d2phi1_dmchi

    mu = chemical_potential(mat, m, chi)
    m_e = elem_mean(mesh, m)
    chi_e = elem_mean(mesh, chi)
    grad_mu = (d2phi1_dchichi(mat, m_e, chi_e)[:, None] * grad_field(mesh, chi)
               + d2phi1_dmchi(mat, m_e, chi_e)[:, None] * grad_field(mesh, m))
    return mu, grad_mu


def _element_coeffs(pr: DiffusionProblem, chi_lin: np.ndarray):
    mesh = pr.mesh
    eps = strain(mesh, pr.u)
    tc = transport_coeffs(pr.mat, eps, elem_mean(mesh, pr.m),
                          elem_mean(mesh, chi_lin), elem_mean(mesh, pr.w_prev))
    ne = mesh.n_elems
    M1 = np.broadcast_to(np.asarray(tc.M1, float), (ne,))
    M2 = np.broadcast_to(np.asarray(tc.M2, float), (ne,))
    return M1, M2


def solve_chi_step(pr: DiffusionProblem) -> DiffusionSolution:
    mesh, mat = pr.mesh, pr.mat
    if np.min(pr.chi_prev) < -NEG_TOL:
        raise InvariantViolation("previous concentration has negative nodes")
    Ml = lumped_mass(mesh)
    rhs_fixed = Ml * pr.chi_prev / pr.tau
    if pr.h_s is not None:
        rhs_fixed = rhs_fixed + pr.h_s

    chi_lin = pr.chi_prev.copy()
    chi_new = chi_lin
    update = np.inf
    last_update = None
    for it in range(1, pr.picard_max + 1):
        M1, M2 = _element_coeffs(pr, chi_lin)
        A = stiffness_with_diag(mesh, M1, Ml / pr.tau).tocsc()
        rhs = rhs_fixed - grad_stiffness_vector(mesh, M2, pr.m)
        chi_new = spla.spsolve(A, rhs)
        update = float(np.sqrt(np.sum(Ml * (chi_new - chi_lin) ** 2)))
        if update <= pr.picard_tol:
            break
        if last_update is not None and update > last_update:
            log.warning("concentration Picard update grew: %.3e -> %.3e",
                        last_update, update)
        last_update = update
        chi_lin = chi_lin + pr.picard_damping * (chi_new - chi_lin)
    else:
        raise StepFailure(
            f"concentration Picard loop stalled: update {update:.3e} "
            f"> {pr.picard_tol:.3e} after {pr.picard_max} iterations")

    if np.min(chi_new) < -NEG_TOL:
        raise InvariantViolation(
            f"negative concentration {np.min(chi_new):.3e}; the scheme "
            "preserves chi >= 0 only on meshes with M-matrix stiffness "
            "and admissible step sizes")
    mu, grad_mu = assemble_mu(mesh, mat, pr.m, chi_new)
    return DiffusionSolution(chi=chi_new, mu=mu, grad_mu=grad_mu,
                             iterations=it, update_norm=update)
