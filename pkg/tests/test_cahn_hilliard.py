import math

import numpy as np
import pytest

from thermophase.cahn_hilliard import CahnHilliardSolver, NewtonDiverged, ch_residual, ch_step
from thermophase.config import load_preset
from thermophase.diagnostics import discrete_energy, total_mass
from thermophase.driver import InitialCondition, initial_condition
from thermophase.fem import FeSpace, Field, SpaceKind
from thermophase.mesh import BoundarySpec, build_structured_mesh
from thermophase.mms import ch_space_study, ch_time_study
from thermophase.physics import Params, SplitViolation
from thermophase.stokes import StokesSolver


@pytest.fixture
def space():
    return FeSpace(build_structured_mesh(8, 8))


def _stokes_flow(mesh):
    u, _ = StokesSolver(mesh, Params(), BoundarySpec()).solve(
        None, forcing=lambda x, y: (np.sin(4 * y), np.cos(3 * x)))
    return u


@pytest.mark.parametrize("beta, beta_max", [(0.2, 0.2), (0.0, 0.0), (0.5, 1.5)])
def test_uniform_minimum_is_stationary(space, beta, beta_max):
    cstar = math.sqrt(1 - beta) / 2
    c = space.constant(cstar)
    params = Params(beta_max=beta_max)
    r1, r2 = ch_residual(c, space.zeros(), c, None, beta, params)
    assert np.abs(r1).max() <= 1e-12 and np.abs(r2).max() <= 1e-12
    new_c, new_mu, report = ch_step(c, None, beta, params)
    assert report.iterations <= 1
    assert np.abs(new_c.coeffs - cstar).max() <= 1e-12


def test_constant_potential_gives_zero_first_residual(space):
    c = initial_condition(InitialCondition(seed=1), space)
    r1, _ = ch_residual(c, space.constant(1.0), c, None, 0.2, Params(beta_max=0.2))
    assert np.abs(r1).max() <= 1e-12


def test_convection_conserves_integral(space):
    solver = CahnHilliardSolver(space, Params(beta_max=0.2))
    u = _stokes_flow(space.mesh)
    c = initial_condition(InitialCondition(amplitude=0.3, seed=2), space)
    C = solver.convection(u)
    assert abs(np.ones(space.dof_count) @ (C @ c.coeffs)) <= 1e-11


def test_jacobian_matches_finite_differences(space):
    params = Params(Pe=100.0, Ch=0.03, dt=0.02, beta_max=1.4)
    solver = CahnHilliardSolver(space, params)
    rng = np.random.Generator(np.random.Philox(9))
    n = space.dof_count
    c_old = Field(space, rng.uniform(-0.5, 0.5, n))
    beta = Field(space, rng.uniform(0, 1.4, n))
    u = _stokes_flow(space.mesh)
    x = np.concatenate([rng.uniform(-0.6, 0.6, n), rng.uniform(-1, 1, n)])
    J = solver.jacobian(x[:n], u)
    h = 1e-6
    R = lambda z: np.concatenate(solver.residual(z[:n], z[n:], c_old, u, beta))
    for _ in range(3):
        v = rng.uniform(-1, 1, 2 * n)
        assert np.linalg.norm((R(x + h * v) - R(x)) / h - J @ v) <= 1e-5


def test_mass_conserved_with_impermeable_flow(space):
    params = Params(Pe=200.0, Ch=0.03, dt=0.05, beta_max=0.2)
    solver = CahnHilliardSolver(space, params)
    u = _stokes_flow(space.mesh)
    c = initial_condition(InitialCondition(amplitude=0.2, seed=4), space)
    m0 = total_mass(c)
    for _ in range(5):
        c, _, report = solver.step(c, u, 0.2)
        assert report.converged and report.residual <= 1e-10
        assert abs(total_mass(c) - m0) <= 1e-9


@pytest.mark.parametrize("dt", [0.01, 0.1, 1.0])
def test_energy_decays_for_any_step(dt):
    space = FeSpace(build_structured_mesh(16, 16))
    params = Params(Pe=1000.0, Ch=0.01, dt=dt, beta_max=0.2)
    solver = CahnHilliardSolver(space, params)
    c = initial_condition(InitialCondition(amplitude=0.3, seed=7), space)
    energy = discrete_energy(c, 0.2, params.Ch)
    for _ in range(15):
        c, _, _ = solver.step(c, None, 0.2)
        new = discrete_energy(c, 0.2, params.Ch)
        assert new <= energy + 1e-12
        energy = new


def test_split_violation_reported(space):
    c = space.constant(0.1)
    with pytest.raises(SplitViolation, match="beta_max"):
        CahnHilliardSolver(space, Params(beta_max=0.3)).step(c, None, Field(space, np.full(space.dof_count, 1.6)))


def test_iteration_cap_raises_with_report(space):
    c = initial_condition(InitialCondition(amplitude=0.3, seed=3), space)
    with pytest.raises(NewtonDiverged) as info:
        CahnHilliardSolver(space, Params(beta_max=0.2)).step(c, None, 0.2, max_iter=1, tol=1e-14)
    assert info.value.report.iterations == 1 and not info.value.report.converged


def test_rejects_vector_space_and_bad_tolerance(space):
    with pytest.raises(ValueError):
        CahnHilliardSolver(FeSpace(space.mesh, SpaceKind.P2_VECTOR2), Params())
    with pytest.raises(ValueError):
        CahnHilliardSolver(space, Params()).step(space.zeros(), tol=0.0)


def test_first_cold_step_regression():
    # golden Newton report: the cold phase-separation preset converges in three undamped iterations
    cfg = load_preset("exp2-cold", mesh={"nx": 50, "ny": 50})
    space = FeSpace(build_structured_mesh(50, 50))
    c0 = initial_condition(cfg.init, space)
    _, _, report = CahnHilliardSolver(space, cfg.params).step(c0, None, 0.2)
    assert report.converged and report.iterations <= 10
    assert report.iterations == 3
    assert report.damping == [1.0, 1.0, 1.0]


def test_manufactured_orders():
    assert ch_space_study().min_order("c") >= 1.8
    assert ch_time_study().min_order("c") >= 0.9
