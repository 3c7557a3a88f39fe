"""Fast structural-property suite run by ``thermophase check``.

Each check returns ``(ok, detail)``; :func:`run_checks` collects them in order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cahn_hilliard import CahnHilliardSolver
from .driver import InitialCondition, initial_condition
from .fem import (
    FeSpace,
    SpaceKind,
    assemble_divergence,
    assemble_mass,
    assemble_stiffness,
    quadrature,
)
from .mesh import BoundarySpec, build_structured_mesh
from .physics import Params, bulk_f, split_derivatives
from .stokes import StokesSolver, inf_sup_probe


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _euler():
    mesh = build_structured_mesh(7, 5, (0.0, 0.0, 2.0, 1.0))
    chi = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
    return chi == 1 and np.all(mesh.signed_areas > 0), f"V - E + T = {chi}"


def _quadrature():
    worst = 0.0
    for degree in range(1, 7):
        rule = quadrature(degree)
        x, y = rule.points.T
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                worst = max(worst, abs(rule.weights @ (x**i * y**j) - exact))
    return worst < 1e-14, f"max monomial error {worst:.1e}"


def _mass_and_stiffness():
    mesh = build_structured_mesh(6, 4, (0.0, 0.0, 2.0, 1.0))
    errs = []
    for kind in (SpaceKind.P1_SCALAR, SpaceKind.P2_VECTOR2):
        space = FeSpace(mesh, kind)
        M = assemble_mass(space)
        errs.append(abs(M.sum() - space.n_comp * mesh.area))
        K = assemble_stiffness(space)
        errs.append(abs(K - K.T).max())
    P1 = FeSpace(mesh)
    errs.append(np.abs(assemble_stiffness(P1) @ np.ones(P1.dof_count)).max())
    worst = float(max(errs))
    return worst < 1e-12, f"mass total, symmetry and constant kernel within {worst:.1e}"


def _rigid_divergence():
    mesh = build_structured_mesh(4, 4)
    V = FeSpace(mesh, SpaceKind.P2_VECTOR2)
    Q = FeSpace(mesh, SpaceKind.P1_PRESSURE_ZERO_MEAN)
    rot = V.interpolate(lambda x, y: (-y, x))
    err = np.abs(assemble_divergence(V, Q) @ rot.coeffs).max()
    return err < 1e-13, f"|B (rotation)| = {err:.1e}"


def _inf_sup():
    b8, b16 = inf_sup_probe(8), inf_sup_probe(16)
    return b16 / b8 >= 0.8, f"beta_h(16) / beta_h(8) = {b16 / b8:.3f} ({b8:.4f}, {b16:.4f})"


def _stokes_symmetric():
    mesh = build_structured_mesh(4, 4)
    solver = StokesSolver(mesh, Params(G=10.0, lambda_rho=0.5, lambda_eta=3.0), BoundarySpec())
    c = FeSpace(mesh).interpolate(lambda x, y: 0.5 * np.sin(3 * x) * np.cos(2 * y))
    u, p = solver.solve(c)
    K = solver.last_matrix
    asym = abs(K - K.T).max()
    div = solver.divergence_residual(u, p)
    return asym < 1e-12 and div < 1e-9, f"asymmetry {asym:.1e}, divergence {div:.1e}"


def _split_identity():
    rng = np.random.Generator(np.random.Philox(1))
    c_new, c_old = rng.uniform(-0.6, 0.6, (2, 200))
    worst = -math.inf
    for beta in (0.0, 0.2, 1.5):
        A = max(0.0, beta - 1.0)
        fp, fm = split_derivatives(c_new, c_old, beta, A)
        # f(c_new) - f(c_old) <= (f+'(c_new) + f-'(c_old)) (c_new - c_old)
        gap = bulk_f(c_new, beta) - bulk_f(c_old, beta) - (fp + fm) * (c_new - c_old)
        worst = max(worst, float(gap.max()))
    return worst <= 1e-14, f"max split gap {worst:.1e} (must be <= 0)"


def _jacobian():
    space = FeSpace(build_structured_mesh(8, 8))
    params = Params(Pe=50.0, Ch=0.05, dt=0.01, beta_max=0.3)
    solver = CahnHilliardSolver(space, params)
    c_old = initial_condition(InitialCondition(amplitude=0.2, seed=3), space)
    V = FeSpace(space.mesh, SpaceKind.P2_VECTOR2)
    u = V.interpolate(lambda x, y: (np.sin(np.pi * x) * np.cos(np.pi * y),
                                    -np.cos(np.pi * x) * np.sin(np.pi * y)))
    rng = np.random.Generator(np.random.Philox(4))
    n = space.dof_count
    x = np.concatenate([c_old.coeffs + 0.05 * rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)])
    v = rng.uniform(-1, 1, 2 * n)
    h = 1e-6

    def R(z):
        return np.concatenate(solver.residual(z[:n], z[n:], c_old, u, 0.3))

    fd = (R(x + h * v) - R(x)) / h
    err = float(np.linalg.norm(fd - solver.jacobian(x[:n], u) @ v))
    return err <= 1e-5, f"|FD - J v| = {err:.1e}"


def _mass_conservation():
    space = FeSpace(build_structured_mesh(12, 12))
    solver = CahnHilliardSolver(space, Params(dt=0.05, beta_max=0.2))
    c = initial_condition(InitialCondition(amplitude=0.2, seed=5), space)
    m0 = float(np.sum(space.mass_matrix @ c.coeffs))
    drift = 0.0
    for _ in range(5):
        c, _, _ = solver.step(c, None, 0.2)
        drift = max(drift, abs(float(np.sum(space.mass_matrix @ c.coeffs)) - m0))
    return drift <= 1e-12, f"mass drift {drift:.1e}"


CHECKS = [
    ("mesh Euler relation and orientation", _euler),
    ("quadrature exactness (degrees 1-6)", _quadrature),
    ("mass and stiffness structure", _mass_and_stiffness),
    ("rigid rotation is weakly divergence-free", _rigid_divergence),
    ("Taylor-Hood inf-sup stability", _inf_sup),
    ("Stokes saddle symmetry and divergence", _stokes_symmetric),
    ("convex-concave split inequality", _split_identity),
    ("Newton Jacobian vs finite differences", _jacobian),
    ("Cahn-Hilliard mass conservation", _mass_conservation),
]


def run_checks(callback=None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(ok), detail)
        results.append(res)
        if callback is not None:
            callback(res)
    return results
