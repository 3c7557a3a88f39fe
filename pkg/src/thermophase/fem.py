"""Lagrange finite elements on triangles: quadrature, spaces, assembly and solves.

All assembly is vectorised over elements. Element matrices are accumulated into
COO triplets and summed by scipy in a fixed order, so results are bit-reproducible.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, Segment

# degree used for the polynomial integrands of the scheme
MASS_DEGREE = 2
VARIABLE_DEGREE = 4
NONLINEAR_DEGREE = 6


# --------------------------------------------------------------------------- #
# quadrature
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sums to 1/2
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.column_stack([1.0 - x - y, x, y])


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)], [w] * 6


def _rule(orbits, degree):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    bary = np.array(pts, dtype=float)
    weights = 0.5 * np.array(wts, dtype=float)
    return QuadratureRule(points=bary[:, 1:].copy(), weights=weights, degree=degree)


def _build_rules():
    third = 1.0 / 3.0
    centroid = ([(third, third, third)], [1.0])
    deg4 = _rule(
        [
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        ],
        4,
    )
    return {
        1: _rule([centroid], 1),
        2: _rule([_orbit3(1.0 / 6.0, third)], 2),
        3: deg4,
        4: deg4,
        5: _rule(
            [
                ([(third, third, third)], [0.225]),
                _orbit3(0.470142064105115, 0.132394152788506),
                _orbit3(0.101286507323456, 0.125939180544827),
            ],
            5,
        ),
        6: _rule(
            [
                _orbit3(0.249286745170910, 0.116786275726379),
                _orbit3(0.063089014491502, 0.050844906370207),
                _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
            ],
            6,
        ),
    }


_RULES = _build_rules()


def quadrature(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle exact up to ``degree`` (1..6)."""
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose 1..6")
    return _RULES[degree]


# --------------------------------------------------------------------------- #
# reference basis functions
# --------------------------------------------------------------------------- #
def _p1_basis(pts):
    x, y = pts[:, 0], pts[:, 1]
    vals = np.column_stack([1.0 - x - y, x, y])
    grads = np.broadcast_to(
        np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(pts), 3, 2)
    ).copy()
    return vals, grads


def _p2_basis(pts):
    # local nodes: vertices 0,1,2 then midpoints of edges 01, 12, 20
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = [l0, l1, l2]
    vals = np.column_stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l0 * l1,
            4 * l1 * l2,
            4 * l2 * l0,
        ]
    )
    grads = np.empty((len(pts), 6, 2))
    for i in range(3):
        grads[:, i, :] = (4 * lam[i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        grads[:, 3 + k, :] = 4 * (lam[i][:, None] * dl[j] + lam[j][:, None] * dl[i])
    return vals, grads


# --------------------------------------------------------------------------- #
# spaces and fields
# --------------------------------------------------------------------------- #
class SpaceKind(enum.Enum):
    P1_SCALAR = "P1Scalar"
    P1_PRESSURE_ZERO_MEAN = "P1PressureZeroMean"
    P2_VECTOR2 = "P2Vector2"


class FeSpace:
    """Degree-of-freedom map for one of the three element families.

    Vector P2 dofs are stored component-blocked: all x-components first.
    """

    def __init__(self, mesh: Mesh, kind: SpaceKind = SpaceKind.P1_SCALAR):
        self.mesh = mesh
        self.kind = SpaceKind(kind)
        if self.kind is SpaceKind.P2_VECTOR2:
            self.order, self.n_comp = 2, 2
            self.n_nodes = mesh.n_vertices + mesh.n_edges
            self.element_nodes = np.hstack(
                [mesh.triangles, mesh.n_vertices + mesh.triangle_edges]
            )
            mid = mesh.vertices[mesh.edges].mean(axis=1)
            self.node_coords = np.vstack([mesh.vertices, mid])
            self._basis = _p2_basis
        else:
            self.order, self.n_comp = 1, 1
            self.n_nodes = mesh.n_vertices
            self.element_nodes = mesh.triangles
            self.node_coords = mesh.vertices
            self._basis = _p1_basis

    def __repr__(self):
        return f"FeSpace({self.kind.value}, dofs={self.dof_count})"

    @property
    def dof_count(self) -> int:
        return self.n_comp * self.n_nodes

    @property
    def n_local(self) -> int:
        return self.element_nodes.shape[1]

    @property
    def is_vector(self) -> bool:
        return self.n_comp == 2

    @property
    def dof_coords(self) -> np.ndarray:
        return np.vstack([self.node_coords] * self.n_comp)

    def basis(self, rule: QuadratureRule):
        """Reference basis values ``(nq, nloc)`` and gradients ``(nq, nloc, 2)``."""
        return self._basis(rule.points)

    @cached_property
    def geometry(self):
        return ElementGeometry(self.mesh)

    def physical_gradients(self, rule: QuadratureRule) -> np.ndarray:
        """Basis gradients ``(T, nq, nloc, 2)`` in physical coordinates."""
        _, ref = self.basis(rule)
        return np.einsum("tba,qib->tqia", self.geometry.inv_jac, ref)

    def boundary_nodes(self, tags) -> np.ndarray:
        """Scalar node indices on boundary edges carrying any of ``tags``."""
        mesh = self.mesh
        edge_ids = mesh.segment_edges(tags)
        nodes = set(np.unique(mesh.edges[edge_ids]).tolist())
        if self.order == 2:
            nodes |= set((mesh.n_vertices + edge_ids).tolist())
        return np.array(sorted(nodes), dtype=int)

    def boundary_dofs(self, tags) -> np.ndarray:
        nodes = self.boundary_nodes(tags)
        return np.concatenate([nodes + k * self.n_nodes for k in range(self.n_comp)])

    def interpolate(self, func) -> "Field":
        """Nodal interpolant of ``func(x, y)``; vector spaces expect ``(fx, fy)``."""
        x, y = self.node_coords.T
        vals = func(x, y)
        if self.is_vector:
            coeffs = np.concatenate(
                [np.broadcast_to(np.asarray(v, float), x.shape) for v in vals]
            )
        else:
            coeffs = np.broadcast_to(np.asarray(vals, float), x.shape).copy()
        return Field(self, coeffs)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.dof_count))

    def constant(self, value) -> "Field":
        if self.is_vector:
            value = np.broadcast_to(np.asarray(value, float), (2,))
            return Field(self, np.repeat(value, self.n_nodes))
        return Field(self, np.full(self.dof_count, float(value)))

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return assemble_mass(self)


class ElementGeometry:
    """Affine maps of every triangle: ``x = x0 + J xi``."""

    def __init__(self, mesh: Mesh):
        p = mesh.vertices[mesh.triangles]
        self.origin = p[:, 0]
        jac = np.empty((mesh.n_triangles, 2, 2))
        jac[:, :, 0] = p[:, 1] - p[:, 0]
        jac[:, :, 1] = p[:, 2] - p[:, 0]
        self.jac = jac
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        self.inv_jac = inv / self.det[:, None, None]

    def points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature points ``(T, nq, 2)``."""
        return self.origin[:, None, :] + np.einsum("tab,qb->tqa", self.jac, rule.points)

    def weights(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature weights ``(T, nq)``."""
        return np.abs(self.det)[:, None] * rule.weights[None, :]


@dataclass
class Field:
    """Coefficient vector bound to an :class:`FeSpace`."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"{self.space.dof_count} dofs"
            )

    def copy(self) -> "Field":
        return Field(self.space, self.coeffs.copy())

    def components(self) -> list[np.ndarray]:
        n = self.space.n_nodes
        return [self.coeffs[k * n:(k + 1) * n] for k in range(self.space.n_comp)]

    def at_quadrature(self, rule: QuadratureRule) -> np.ndarray:
        """Values at quadrature points: ``(T, nq)`` or ``(T, nq, 2)`` for vectors."""
        vals, _ = self.space.basis(rule)
        nodes = self.space.element_nodes
        out = [np.einsum("qi,ti->tq", vals, comp[nodes]) for comp in self.components()]
        return out[0] if len(out) == 1 else np.stack(out, axis=-1)

    def gradient_at_quadrature(self, rule: QuadratureRule) -> np.ndarray:
        """Gradients ``(T, nq, 2)`` for scalars, ``(T, nq, 2, 2)`` (component, d/dx_k) for vectors."""
        grads = self.space.physical_gradients(rule)
        nodes = self.space.element_nodes
        out = [np.einsum("tqia,ti->tqa", grads, comp[nodes]) for comp in self.components()]
        return out[0] if len(out) == 1 else np.stack(out, axis=2)

    def vertex_values(self) -> np.ndarray:
        """Nodal values at mesh vertices; ``(nv,)`` or ``(nv, 2)``."""
        nv = self.space.mesh.n_vertices
        comps = [c[:nv] for c in self.components()]
        return comps[0] if len(comps) == 1 else np.column_stack(comps)


def _check_same_mesh(*spaces):
    meshes = {id(s.mesh) for s in spaces}
    if len(meshes) != 1:
        raise ValueError("fields live on different meshes")


# --------------------------------------------------------------------------- #
# assembly
# --------------------------------------------------------------------------- #
def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum element blocks ``vals[t, i, j]`` into a CSR matrix."""
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    mat = sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def coefficient_at_quadrature(coeff, space: FeSpace, rule: QuadratureRule) -> np.ndarray:
    """Evaluate a constant, a scalar :class:`Field` or a ready ``(T, nq)`` array."""
    shape = (space.mesh.n_triangles, len(rule.weights))
    if isinstance(coeff, Field):
        _check_same_mesh(space, coeff.space)
        return coeff.at_quadrature(rule)
    arr = np.asarray(coeff, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ValueError(f"coefficient array has shape {arr.shape}, expected {shape}")
    return arr


def _scalar_mass(space, w, rule):
    vals, _ = space.basis(rule)
    jw = space.geometry.weights(rule) * w
    local = np.einsum("tq,qi,qj->tij", jw, vals, vals)
    return local


def _block_vector(space, blocks):
    """Assemble ``blocks[(a, b)]`` local matrices into a component-blocked matrix."""
    n = space.n_nodes
    nodes = space.element_nodes
    parts = []
    for (a, b), local in blocks.items():
        parts.append((nodes + a * n, nodes + b * n, local))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return _scatter(rows, cols, vals, (space.dof_count, space.dof_count))


def assemble_mass(space: FeSpace, coeff=1.0, degree: int | None = None) -> sp.csr_matrix:
    """Weighted mass matrix ``int w phi_i phi_j`` (block-diagonal for vectors)."""
    if degree is None:
        degree = MASS_DEGREE if (space.order == 1 and np.ndim(coeff) == 0
                                 and not isinstance(coeff, Field)) else NONLINEAR_DEGREE
    rule = quadrature(degree)
    w = coefficient_at_quadrature(coeff, space, rule)
    local = _scalar_mass(space, w, rule)
    if space.is_vector:
        return _block_vector(space, {(0, 0): local, (1, 1): local})
    nodes = space.element_nodes
    return _scatter(nodes, nodes, local, (space.dof_count, space.dof_count))


def assemble_stiffness(space: FeSpace, coeff=1.0, degree: int | None = None) -> sp.csr_matrix:
    """Diffusion matrix ``int k grad phi_j . grad phi_i``.

    On the vector space this is the symmetric-gradient form ``int 2 eta eps(u):eps(v)``.
    """
    const = np.ndim(coeff) == 0 and not isinstance(coeff, Field)
    if degree is None:
        degree = MASS_DEGREE if (const and space.order == 1) else VARIABLE_DEGREE
    rule = quadrature(degree)
    k = coefficient_at_quadrature(coeff, space, rule)
    if np.any(k <= 0.0):
        t, q = np.unravel_index(np.argmin(k), k.shape)
        raise ValueError(
            f"nonpositive diffusion/viscosity coefficient {k[t, q]:.6g} on triangle {t}"
        )
    grads = space.physical_gradients(rule)
    jw = space.geometry.weights(rule) * k
    if not space.is_vector:
        local = np.einsum("tq,tqia,tqja->tij", jw, grads, grads)
        nodes = space.element_nodes
        return _scatter(nodes, nodes, local, (space.dof_count, space.dof_count))
    lap = np.einsum("tq,tqia,tqja->tij", jw, grads, grads)
    blocks = {}
    for a in range(2):
        for b in range(2):
            # row component a (test), column component b (trial):
            # 2 eps(phi_j e_b) : eps(phi_i e_a) = delta_ab grad.grad + d_b phi_i d_a phi_j
            cross = np.einsum("tq,tqi,tqj->tij", jw, grads[..., b], grads[..., a])
            blocks[(a, b)] = cross + lap if a == b else cross
    return _block_vector(space, blocks)


def assemble_convection(space: FeSpace, velocity: Field, degree: int = VARIABLE_DEGREE) -> sp.csr_matrix:
    """``C[i, j] = int (u . grad phi_j) phi_i`` for a scalar space."""
    _check_same_mesh(space, velocity.space)
    if space.is_vector or not velocity.space.is_vector:
        raise ValueError("convection needs a scalar space and a vector velocity")
    rule = quadrature(degree)
    u = velocity.at_quadrature(rule)  # (T, nq, 2)
    vals, _ = space.basis(rule)
    grads = space.physical_gradients(rule)
    jw = space.geometry.weights(rule)
    adv = np.einsum("tqa,tqja->tqj", u, grads)
    local = np.einsum("tq,qi,tqj->tij", jw, vals, adv)
    nodes = space.element_nodes
    return _scatter(nodes, nodes, local, (space.dof_count, space.dof_count))


def assemble_divergence(v_space: FeSpace, p_space: FeSpace, degree: int = MASS_DEGREE) -> sp.csr_matrix:
    """``B[k, j] = int q_k div(phi_j)``, shape ``(p dofs, v dofs)``."""
    _check_same_mesh(v_space, p_space)
    if not v_space.is_vector or p_space.is_vector:
        raise ValueError("divergence needs a vector velocity space and a scalar pressure space")
    rule = quadrature(degree)
    qvals, _ = p_space.basis(rule)
    grads = v_space.physical_gradients(rule)
    jw = v_space.geometry.weights(rule)
    n = v_space.n_nodes
    rows, cols, vals = [], [], []
    for a in range(2):
        local = np.einsum("tq,qk,tqj->tkj", jw, qvals, grads[..., a])
        rows.append(p_space.element_nodes)
        cols.append(v_space.element_nodes + a * n)
        vals.append(local)
    return _scatter(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (p_space.dof_count, v_space.dof_count),
    )


def assemble_load(space: FeSpace, source, degree: int = NONLINEAR_DEGREE) -> np.ndarray:
    """Load vector ``int f phi_i``.

    ``source`` is a callable ``f(x, y)`` (returning ``(fx, fy)`` on vector spaces) or
    an array of quadrature values ``(T, nq)`` / ``(T, nq, 2)``.
    """
    rule = quadrature(degree)
    vals, _ = space.basis(rule)
    jw = space.geometry.weights(rule)
    if callable(source):
        pts = space.geometry.points(rule)
        f = source(pts[..., 0], pts[..., 1])
        if space.is_vector:
            f = np.stack([np.broadcast_to(np.asarray(c, float), jw.shape) for c in f], axis=-1)
        else:
            f = np.broadcast_to(np.asarray(f, float), jw.shape)
    else:
        f = np.asarray(source, dtype=float)
    out = np.zeros(space.dof_count)
    nodes = space.element_nodes
    if space.is_vector:
        for a in range(2):
            local = np.einsum("tq,qi->ti", jw * f[..., a], vals)
            np.add.at(out, nodes + a * space.n_nodes, local)
    else:
        local = np.einsum("tq,qi->ti", jw * f, vals)
        np.add.at(out, nodes, local)
    return out


# --------------------------------------------------------------------------- #
# constraints and linear solves
# --------------------------------------------------------------------------- #
class LinearSolveError(RuntimeError):
    pass


def merge_constraints(*groups):
    """Combine ``(dofs, values)`` groups; later groups must agree on shared dofs."""
    table: dict[int, float] = {}
    for dofs, values in groups:
        values = np.broadcast_to(np.asarray(values, float), np.shape(dofs))
        for d, v in zip(np.asarray(dofs, int).tolist(), values.tolist()):
            if d in table and table[d] != v:
                raise ValueError(
                    f"conflicting Dirichlet values for dof {d}: {table[d]} and {v}"
                )
            table[d] = v
    dofs = np.array(sorted(table), dtype=int)
    return dofs, np.array([table[d] for d in dofs.tolist()], dtype=float)


def apply_dirichlet(A, b, dofs, values):
    """Impose ``x[dofs] = values`` by symmetric row/column elimination.

    Returns the modified ``(A, b)``; constrained rows become identity rows.
    """
    dofs, values = merge_constraints((dofs, values))
    A = sp.csr_matrix(A)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if dofs.size == 0:
        return A, b
    if dofs.min() < 0 or dofs.max() >= n:
        raise IndexError("Dirichlet dof out of range")
    g = np.zeros(n)
    g[dofs] = values
    b = b - A @ g
    b[dofs] = values
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    fixed = sp.diags(1.0 - keep)
    A = (D @ A @ D + fixed).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return A, b


class Factorization:
    """Sparse LU factorisation (SuperLU, partial pivoting) with residual checking."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        if self.A.shape[0] != self.A.shape[1]:
            raise LinearSolveError(f"matrix is not square: {self.A.shape}")
        self.norm = spla.norm(self.A, "fro")
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            diag = np.abs(self.A.diagonal())
            raise LinearSolveError(
                f"sparse LU failed ({exc}); n={self.A.shape[0]}, "
                f"min |diag|={diag.min():.3e}, max |diag|={diag.max():.3e}"
            ) from exc
        udiag = np.abs(self.lu.U.diagonal())
        if udiag.min() <= 1e-14 * udiag.max():
            raise LinearSolveError(
                f"numerically singular matrix: smallest pivot {udiag.min():.3e}, "
                f"largest {udiag.max():.3e}"
            )

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b)
        bound = lambda x: 1e-10 * (self.norm * np.linalg.norm(x) + np.linalg.norm(b))
        r = b - self.A @ x
        for _ in range(2):
            if np.linalg.norm(r) <= bound(x):
                break
            x = x + self.lu.solve(r)
            r = b - self.A @ x
        if not np.all(np.isfinite(x)) or np.linalg.norm(r) > bound(x):
            raise LinearSolveError(
                f"residual {np.linalg.norm(r):.3e} exceeds tolerance {bound(x):.3e}"
            )
        return x


def solve_sparse(A, b) -> np.ndarray:
    """Direct solve of ``A x = b``."""
    return Factorization(A).solve(b)


def boundary_dof_values(space: FeSpace, tags, func) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet data sampled at the boundary nodes of ``tags``."""
    nodes = space.boundary_nodes(tags)
    x, y = space.node_coords[nodes].T
    vals = func(x, y)
    if not space.is_vector:
        return nodes, np.broadcast_to(np.asarray(vals, float), nodes.shape).copy()
    dofs = np.concatenate([nodes + k * space.n_nodes for k in range(2)])
    return dofs, np.concatenate([np.broadcast_to(np.asarray(v, float), nodes.shape) for v in vals])


__all__ = [
    "QuadratureRule", "quadrature", "SpaceKind", "FeSpace", "Field", "ElementGeometry",
    "assemble_mass", "assemble_stiffness", "assemble_convection", "assemble_divergence",
    "assemble_load", "apply_dirichlet", "solve_sparse", "Factorization",
    "LinearSolveError", "merge_constraints", "boundary_dof_values", "Segment",
]
