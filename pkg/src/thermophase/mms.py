"""Manufactured-solution convergence studies for the heat, Stokes and Cahn-Hilliard solvers.

Each study solves a forced problem with a known smooth solution on a sequence of
structured unit-square meshes and reports L2 errors and observed orders
``log2(e_h / e_{h/2})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cahn_hilliard import CahnHilliardSolver
from .fem import NONLINEAR_DEGREE, FeSpace, Field, SpaceKind, assemble_load, quadrature
from .heat import HeatSolver
from .mesh import BoundarySpec, build_structured_mesh
from .physics import Params
from .stokes import StokesSolver

PI = math.pi


@dataclass
class ConvergenceStudy:
    """Errors per refinement level; ``orders[name][k]`` compares levels k and k+1."""

    name: str
    parameter: str  # "h" or "dt"
    values: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    def add(self, value: float, **errs):
        self.values.append(float(value))
        for key, err in errs.items():
            self.errors.setdefault(key, []).append(float(err))

    @property
    def orders(self) -> dict:
        out = {}
        for key, errs in self.errors.items():
            e = np.asarray(errs)
            v = np.asarray(self.values)
            out[key] = list(np.log(e[:-1] / e[1:]) / np.log(v[:-1] / v[1:]))
        return out

    def min_order(self, key: str) -> float:
        return float(min(self.orders[key]))

    def table(self) -> str:
        keys = list(self.errors)
        head = f"{self.parameter:>10}" + "".join(f"{'L2 ' + k:>16}{'order':>8}" for k in keys)
        lines = [self.name, head]
        orders = self.orders
        for i, v in enumerate(self.values):
            row = f"{v:10.5f}"
            for k in keys:
                rate = f"{orders[k][i - 1]:8.3f}" if i else f"{'-':>8}"
                row += f"{self.errors[k][i]:16.6e}{rate}"
            lines.append(row)
        return "\n".join(lines)


def l2_error(fh: Field, exact) -> float:
    """``||f_h - f||_L2`` by the degree-6 rule; vector spaces expect ``(fx, fy)``."""
    rule = quadrature(NONLINEAR_DEGREE)
    space = fh.space
    pts = space.geometry.points(rule)
    ex = exact(pts[..., 0], pts[..., 1])
    if space.is_vector:
        ex = np.stack([np.broadcast_to(e, pts.shape[:2]) for e in ex], axis=-1)
        diff = np.sum((fh.at_quadrature(rule) - ex) ** 2, axis=-1)
    else:
        diff = (fh.at_quadrature(rule) - ex) ** 2
    return math.sqrt(float(np.sum(space.geometry.weights(rule) * diff)))


# --------------------------------------------------------------------------- #
# heat: theta = exp(-t) cos(pi x) cos(pi y), insulated unit square
# --------------------------------------------------------------------------- #
def _heat_exact(t):
    return lambda x, y: math.exp(-t) * np.cos(PI * x) * np.cos(PI * y)


def _heat_source(t, pe_theta):
    k = 2.0 * PI**2 / pe_theta - 1.0
    return lambda x, y: k * math.exp(-t) * np.cos(PI * x) * np.cos(PI * y)


def heat_error(nx: int, dt: float, t_final: float, pe_theta: float = 10.0) -> float:
    n_steps = int(round(t_final / dt))
    mesh = build_structured_mesh(nx, nx)
    space = FeSpace(mesh)
    params = Params(Pe_theta=pe_theta, dt=dt)
    solver = HeatSolver(space, params, BoundarySpec())
    theta = space.interpolate(_heat_exact(0.0))
    for m in range(1, n_steps + 1):
        theta = solver.step(theta, None, _heat_source(m * dt, pe_theta))
    return l2_error(theta, _heat_exact(n_steps * dt))


def heat_space_study(nxs=(8, 16, 32), t_final: float = 0.25, dt_scale: float = 1.0):
    """Spatial refinement with ``dt = dt_scale * h^2``."""
    study = ConvergenceStudy("heat: spatial refinement, dt ~ h^2", "h")
    for nx in nxs:
        h = 1.0 / nx
        study.add(h, theta=heat_error(nx, dt_scale * h * h, t_final))
    return study


def heat_time_study(dts=(0.2, 0.1, 0.05), nx: int = 64, t_final: float = 0.8):
    study = ConvergenceStudy(f"heat: temporal refinement on {nx}x{nx}", "dt")
    for dt in dts:
        study.add(dt, theta=heat_error(nx, dt, t_final))
    return study


# --------------------------------------------------------------------------- #
# Stokes: stream function sin^2(pi x) sin^2(pi y), p = cos(pi x) cos(pi y), eta = 1
# --------------------------------------------------------------------------- #
def stokes_velocity(x, y):
    return (PI * np.sin(PI * x) ** 2 * np.sin(2 * PI * y),
            -PI * np.sin(2 * PI * x) * np.sin(PI * y) ** 2)


def stokes_pressure(x, y):
    return np.cos(PI * x) * np.cos(PI * y)


def stokes_forcing(x, y):
    """``-Laplace(u) + grad(p)`` for the solenoidal manufactured field."""
    lap_x = 2 * PI**3 * np.sin(2 * PI * y) * (2 * np.cos(2 * PI * x) - 1)
    lap_y = -2 * PI**3 * np.sin(2 * PI * x) * (2 * np.cos(2 * PI * y) - 1)
    px = -PI * np.sin(PI * x) * np.cos(PI * y)
    py = -PI * np.cos(PI * x) * np.sin(PI * y)
    return -lap_x + px, -lap_y + py


def stokes_errors(nx: int):
    """Velocity and pressure L2 errors plus the relative discrete divergence."""
    mesh = build_structured_mesh(nx, nx)
    solver = StokesSolver(mesh, Params(), BoundarySpec())
    u, p = solver.solve(None, forcing=stokes_forcing)
    return l2_error(u, stokes_velocity), l2_error(p, stokes_pressure), solver.divergence_residual(u, p)


def stokes_study(nxs=(8, 16, 32)):
    study = ConvergenceStudy("stokes: Taylor-Hood, constant viscosity", "h")
    study.divergence = []
    for nx in nxs:
        eu, ep, div = stokes_errors(nx)
        study.add(1.0 / nx, velocity=eu, pressure=ep)
        study.divergence.append(div)
    return study


# --------------------------------------------------------------------------- #
# Cahn-Hilliard, no flow: c = a(t) cos(pi x) cos(pi y), a = 0.2 exp(-t).
# beta = 1.5 keeps the manufactured mode linearly stable and exercises A > 0.
# --------------------------------------------------------------------------- #
CH_PARAMS = dict(Pe=1.0, Ch=0.1, beta=1.5, amplitude=0.2)


def _ch_amp(t):
    return CH_PARAMS["amplitude"] * math.exp(-t)


def _ch_exact(t):
    a = _ch_amp(t)
    return lambda x, y: a * np.cos(PI * x) * np.cos(PI * y)


def _ch_source(t, pe, ch, beta):
    a = _ch_amp(t)

    def s(x, y):
        g = np.cos(PI * x) * np.cos(PI * y)
        grad2 = PI**2 * ((np.sin(PI * x) * np.cos(PI * y)) ** 2
                         + (np.cos(PI * x) * np.sin(PI * y)) ** 2)
        lap_g3 = -6 * PI**2 * g**3 + 6 * g * grad2
        lap_mu = 8 * a**3 * lap_g3 - 2 * PI**2 * (-2 * (1 - beta) + 2 * PI**2 * ch**2) * a * g
        return -a * g - lap_mu / pe

    return s


def ch_solution(nx: int, dt: float, t_final: float) -> Field:
    pe, ch, beta = CH_PARAMS["Pe"], CH_PARAMS["Ch"], CH_PARAMS["beta"]
    n_steps = int(round(t_final / dt))
    space = FeSpace(build_structured_mesh(nx, nx), SpaceKind.P1_SCALAR)
    solver = CahnHilliardSolver(space, Params(Pe=pe, Ch=ch, dt=dt, beta_max=beta))
    c = space.interpolate(_ch_exact(0.0))
    for m in range(1, n_steps + 1):
        load = assemble_load(space, _ch_source(m * dt, pe, ch, beta))
        c, _, _ = solver.step(c, None, beta, tol=1e-11, source=load)
    return c


def ch_error(nx: int, dt: float, t_final: float) -> float:
    return l2_error(ch_solution(nx, dt, t_final), _ch_exact(t_final))


def ch_space_study(nxs=(8, 16, 32), t_final: float = 0.0625, dt_scale: float = 1.0):
    study = ConvergenceStudy("cahn-hilliard (no flow): spatial refinement, dt ~ h^2", "h")
    for nx in nxs:
        h = 1.0 / nx
        study.add(h, c=ch_error(nx, dt_scale * h * h, t_final))
    return study


def ch_time_study(dts=(0.2, 0.1, 0.05), nx: int = 16, t_final: float = 0.8, ref_factor: int = 16):
    """Temporal refinement against a ``dt / ref_factor`` run on the same mesh.

    The manufactured mode decays quickly, so the time error sits below the spatial
    error of any affordable mesh; the same-mesh reference removes the latter.
    """
    study = ConvergenceStudy(f"cahn-hilliard (no flow): temporal refinement on {nx}x{nx}", "dt")
    ref = ch_solution(nx, min(dts) / ref_factor, t_final)
    M = ref.space.mass_matrix
    for dt in dts:
        d = ch_solution(nx, dt, t_final).coeffs - ref.coeffs
        study.add(dt, c=math.sqrt(float(d @ (M @ d))))
    return study


STUDIES = {
    "heat": (heat_space_study, heat_time_study),
    "stokes": (stokes_study,),
    "ch-diffusive": (ch_space_study, ch_time_study),
}
