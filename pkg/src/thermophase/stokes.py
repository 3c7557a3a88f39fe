"""Quasi-static variable-viscosity Stokes solve on the Taylor-Hood pair P2/P1."""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fem import (
    VARIABLE_DEGREE,
    Factorization,
    FeSpace,
    Field,
    LinearSolveError,
    SpaceKind,
    apply_dirichlet,
    assemble_divergence,
    assemble_load,
    assemble_stiffness,
    quadrature,
)
from .mesh import ALL_SEGMENTS, BoundarySpec, Mesh, build_structured_mesh
from .physics import Params, eta_of, rho_of


def lid_profile(x, gamma: float, L: float):
    """Quartic tangential lid velocity, vanishing at both corners."""
    s = np.asarray(x, dtype=float) / L
    return gamma * s**2 * (1.0 - s) ** 2, np.zeros_like(s)


def velocity_constraints(space: FeSpace, bc: BoundarySpec):
    """Strong velocity data: no-slip sides and the optional sampled lid.

    No-slip wins at corners shared with the lid.
    """
    table: dict[int, float] = {}
    n = space.n_nodes
    if bc.lid is not None:
        nodes = space.boundary_nodes([bc.lid.segment])
        ux, uy = lid_profile(space.node_coords[nodes, 0] - space.mesh.rect[0],
                             bc.lid.gamma, bc.lid.length)
        for k, node in enumerate(nodes.tolist()):
            table[node] = float(ux[k])
            table[node + n] = float(uy[k])
    if bc.velocity_dirichlet:
        for node in space.boundary_nodes(bc.velocity_dirichlet).tolist():
            table[node] = 0.0
            table[node + n] = 0.0
    dofs = np.array(sorted(table), dtype=int)
    return dofs, np.array([table[d] for d in dofs.tolist()])


class StokesSolver:
    """Assembles and solves the saddle system for one mesh and boundary setup.

    Unknowns are ordered ``[u, p]`` (plus one multiplier for the pressure mean when
    no side is traction-free). The continuity row is negated so the matrix is
    symmetric.
    """

    def __init__(self, mesh: Mesh, params: Params, bc: BoundarySpec):
        if not bc.has_velocity_constraint:
            raise LinearSolveError("Stokes problem has no velocity constraint; saddle system is singular")
        self.mesh = mesh
        self.params = params
        self.bc = bc
        self.zero_mean = not bc.velocity_traction_free
        self.V = FeSpace(mesh, SpaceKind.P2_VECTOR2)
        self.Q = FeSpace(
            mesh, SpaceKind.P1_PRESSURE_ZERO_MEAN if self.zero_mean else SpaceKind.P1_SCALAR
        )
        self.B = assemble_divergence(self.V, self.Q)
        self.pressure_weights = np.asarray(self.Q.mass_matrix.sum(axis=0)).ravel()
        self.dofs, self.values = velocity_constraints(self.V, bc)
        self._rule = quadrature(VARIABLE_DEGREE)
        self.last_matrix = None

    @property
    def size(self) -> int:
        return self.V.dof_count + self.Q.dof_count + int(self.zero_mean)

    def viscosity_at_quadrature(self, c_old: Field | None):
        if c_old is None:
            return 1.0
        return eta_of(c_old.at_quadrature(self._rule), self.params.lambda_eta)

    def assemble(self, c_old: Field | None, forcing=None):
        """Saddle matrix and right-hand side before boundary conditions.

        ``forcing`` (callable or quadrature array) replaces buoyancy; used for verification.
        """
        p = self.params
        A = assemble_stiffness(self.V, self.viscosity_at_quadrature(c_old))
        if forcing is None:
            if c_old is None or p.G == 0.0:
                f = np.zeros(self.V.dof_count)
            else:
                rho = rho_of(c_old.at_quadrature(self._rule), p.lambda_rho)
                body = p.G * rho[..., None] * np.asarray(p.g_hat)[None, None, :]
                f = assemble_load(self.V, body, degree=VARIABLE_DEGREE)
        else:
            f = assemble_load(self.V, forcing)
        blocks = [[A, -self.B.T], [-self.B, None]]
        if self.zero_mean:
            m = sp.csr_matrix(self.pressure_weights[None, :])
            blocks = [
                [A, -self.B.T, None],
                [-self.B, None, -m.T],
                [None, -m, None],
            ]
        K = sp.bmat(blocks, format="csr")
        rhs = np.zeros(self.size)
        rhs[: self.V.dof_count] = f
        return K, rhs

    def solve(self, c_old: Field | None, forcing=None) -> tuple[Field, Field]:
        K, rhs = self.assemble(c_old, forcing)
        K, rhs = apply_dirichlet(K, rhs, self.dofs, self.values)
        self.last_matrix = K
        x = Factorization(K).solve(rhs)
        nv, nq = self.V.dof_count, self.Q.dof_count
        return Field(self.V, x[:nv]), Field(self.Q, x[nv:nv + nq])

    def divergence_residual(self, u: Field, p: Field | None = None) -> float:
        """``||B u|| / ||(u, p)||``, the weak divergence relative to the solution size.

        Normalising by the pressure as well keeps the measure meaningful when the
        velocity itself is at round-off level (hydrostatic rest).
        """
        norm = np.linalg.norm(u.coeffs)
        if p is not None:
            norm = np.hypot(norm, np.linalg.norm(p.coeffs))
        if norm == 0.0:
            return 0.0
        return float(np.linalg.norm(self.B @ u.coeffs) / norm)


def stokes_step(c_old: Field | None, mesh: Mesh, params: Params, bc: BoundarySpec):
    """Solve for ``(u, p)`` with viscosity and buoyancy frozen at ``c_old``."""
    return StokesSolver(mesh, params, bc).solve(c_old)


def inf_sup_probe(nx: int) -> float:
    """Discrete inf-sup constant of P2/P1 on the unit square with full no-slip.

    Square root of the smallest nonzero generalised eigenvalue of the pressure
    Schur complement ``B A^-1 B^T`` against the pressure mass matrix.
    """
    mesh = build_structured_mesh(nx, nx)
    V = FeSpace(mesh, SpaceKind.P2_VECTOR2)
    Q = FeSpace(mesh, SpaceKind.P1_PRESSURE_ZERO_MEAN)
    A = assemble_stiffness(V).tocsr()
    B = assemble_divergence(V, Q).tocsr()
    fixed = V.boundary_dofs(sorted(ALL_SEGMENTS))
    free = np.setdiff1d(np.arange(V.dof_count), fixed)
    Aff = A[free][:, free]
    Bf = B[:, free]
    lu = Factorization(Aff)
    X = np.column_stack([lu.solve(col) for col in Bf.T.toarray().T])
    S = (Bf @ X)
    S = 0.5 * (S + S.T)
    Mp = Q.mass_matrix.toarray()
    eig = np.sort(scipy.linalg.eigh(S, Mp, eigvals_only=True))
    return float(np.sqrt(max(eig[1], 0.0)))
