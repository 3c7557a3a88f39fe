"""Backward-Euler step of the advected heat equation."""
from __future__ import annotations

import logging

import numpy as np

from .fem import (
    FeSpace,
    Field,
    apply_dirichlet,
    assemble_convection,
    assemble_load,
    assemble_stiffness,
    merge_constraints,
    solve_sparse,
)
from .mesh import BoundarySpec
from .physics import Params

log = logging.getLogger(__name__)

THETA_WARN = -1e-6


def temperature_constraints(space: FeSpace, bc: BoundarySpec):
    """Dirichlet dofs/values for the temperature.

    Where two Dirichlet sides meet at a corner the higher-numbered side wins.
    """
    table = {}
    for seg in sorted(bc.temperature_dirichlet):
        nodes = space.boundary_nodes([seg])
        for n in nodes.tolist():
            table[n] = bc.temperature_dirichlet[seg]
    dofs = np.array(sorted(table), dtype=int)
    return merge_constraints((dofs, [table[d] for d in dofs.tolist()]))


class HeatSolver:
    """Caches the mass and diffusion matrices of one P1 space."""

    def __init__(self, space: FeSpace, params: Params, bc: BoundarySpec):
        if space.is_vector:
            raise ValueError("temperature lives in a scalar P1 space")
        self.space = space
        self.params = params
        self.bc = bc
        self.M = space.mass_matrix
        self.K = assemble_stiffness(space)
        self.dofs, self.values = temperature_constraints(space, bc)

    def step(self, theta_old: Field, velocity: Field | None = None, source=None) -> Field:
        """Advance one step; ``source`` (callable or quadrature array) is for verification only."""
        p = self.params
        if theta_old.space.mesh is not self.space.mesh:
            raise ValueError("temperature field is on a different mesh")
        lhs = self.M / p.dt + self.K / p.Pe_theta
        if velocity is not None and np.any(velocity.coeffs):
            lhs = lhs + assemble_convection(self.space, velocity)
        rhs = self.M @ theta_old.coeffs / p.dt
        if source is not None:
            rhs = rhs + assemble_load(self.space, source)
        A, b = apply_dirichlet(lhs, rhs, self.dofs, self.values)
        return Field(self.space, solve_sparse(A, b))


def heat_step(theta_old: Field, velocity: Field | None, params: Params,
              bc: BoundarySpec, source=None) -> Field:
    """One step of ``(M/dt + C(u) + K/Pe_theta) theta = M theta_old / dt``."""
    return HeatSolver(theta_old.space, params, bc).step(theta_old, velocity, source)


def min_theta(field: Field) -> float:
    return float(np.min(field.coeffs))


def check_nonnegative(field: Field, step: int | None = None) -> float:
    """Warn (never fail) when the discrete temperature dips below ``-1e-6``."""
    value = min_theta(field)
    if value < THETA_WARN:
        log.warning("temperature minimum %.3e below zero at step %s", value, step)
    return value


__all__ = ["HeatSolver", "heat_step", "min_theta", "check_nonnegative",
           "temperature_constraints"]
