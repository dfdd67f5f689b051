"""Per-step field snapshots and whole-run trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constitutive import MaterialModel, theta_of_w
from .grid import Mesh


@dataclass(frozen=True)
class State:
    """All nodal unknowns after step ``k`` (k=0 is the initial data).

    ``u_prev`` is the displacement one step earlier, so the backward
    velocity (u - u_prev)/tau is always available; at k=0 it holds
    u0 - tau*v0, which encodes the initial velocity.
    """

    k: int
    t: float
    u: np.ndarray
    u_prev: np.ndarray
    m: np.ndarray
    chi: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    xi: np.ndarray

    def velocity(self, tau: float) -> np.ndarray:
        return (self.u - self.u_prev) / tau

    def theta(self, mat: MaterialModel) -> np.ndarray:
        return theta_of_w(mat, self.m, self.w)


@dataclass
class Trajectory:
    """A complete run: mesh, material, uniform step and the state sequence.

    ``rows`` carries the per-step energy-ledger rows (row 0 is the initial
    snapshot with zero increments), filled in by the driver.
    """

    mesh: Mesh
    mat: MaterialModel
    tau: float
    states: list[State] = field(default_factory=list)
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def T(self) -> float:
        return self.states[-1].t if self.states else 0.0

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def field_array(self, name: str) -> np.ndarray:
        """Stack one field over all states, shape (n_states, ...)."""
        return np.stack([getattr(s, name) for s in self.states])

    def check_uniform(self):
        t = self.times()
        if len(t) > 1 and not np.allclose(np.diff(t), self.tau, rtol=1e-12):
            raise ValueError("trajectory timestamps are not uniform")
