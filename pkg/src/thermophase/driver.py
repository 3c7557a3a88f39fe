"""Sequential coupling of the heat, Stokes and Cahn-Hilliard substeps."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics
from .cahn_hilliard import CahnHilliardSolver, NewtonReport
from .fem import FeSpace, Field, SpaceKind
from .heat import HeatSolver, check_nonnegative
from .mesh import BoundarySpec, build_structured_mesh
from .physics import Params, beta_of
from .stokes import StokesSolver

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A substep failed; ``step`` is the index of the step being computed."""

    def __init__(self, step: int, stage: str, cause: Exception):
        super().__init__(f"step {step}: {stage} failed: {cause}")
        self.step = step
        self.stage = stage


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "random"  # uniform | random | two-layer
    value: float = 0.0
    mean_c: float = 0.2
    amplitude: float = 0.05
    seed: int = 0
    height: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "random", "two-layer"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError(f"perturbation amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    nx: int
    ny: int
    rect: tuple
    params: Params
    bc: BoundarySpec
    init: InitialCondition = InitialCondition()
    theta0: float = 0.0
    solve_heat: bool = False
    solve_stokes: bool = False
    t_final: float = 1.0
    cadence: int = 1
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    snapshots: bool = True
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError(f"final time must be positive, got {self.t_final}")
        if self.cadence < 1 or self.n_steps % self.cadence:
            raise ValueError(
                f"output cadence {self.cadence} does not divide the step count {self.n_steps}"
            )
        if self.solve_stokes and not self.bc.has_velocity_constraint:
            raise ValueError("Stokes solve requested without any no-slip or lid side")

    @property
    def n_steps(self) -> int:
        n = self.t_final / self.params.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"final time {self.t_final} is not a multiple of dt={self.params.dt}")
        return int(round(n))

    def with_updates(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def initial_condition(spec: InitialCondition, space: FeSpace, Ch: float = 0.01,
                      seed: int | None = None) -> Field:
    """Initial phase field; random values come from a Philox counter-based generator."""
    if spec.kind == "uniform":
        return space.constant(spec.value)
    if spec.kind == "random":
        seed = spec.seed if seed is None else seed
        rng = np.random.Generator(np.random.Philox(int(seed)))
        noise = rng.uniform(-1.0, 1.0, space.dof_count)
        return Field(space, spec.mean_c + spec.amplitude * noise)
    y = space.node_coords[:, 1]
    return Field(space, 0.5 * np.tanh((y - spec.height) / (math.sqrt(2.0) * Ch)))


@dataclass
class SimState:
    step: int
    time: float
    c: Field
    mu: Field
    u: Field
    p: Field
    theta: Field
    newton: NewtonReport | None = None
    divergence: float = 0.0


@dataclass
class RunResult:
    config: ExperimentConfig
    state: SimState
    records: list
    files: list
    wall_time: float
    theta_min: float
    max_divergence: float
    newton_reports: list = field(default_factory=list)

    @property
    def summary(self) -> dict:
        last = self.records[-1]
        return {
            "name": self.config.name,
            "steps": self.state.step,
            "time": self.state.time,
            "wall_time": self.wall_time,
            "theta_min": self.theta_min,
            "max_divergence": self.max_divergence,
            "final": last.as_dict(),
        }


class Simulation:
    """Owns the mesh, spaces and cached subsolvers of one experiment.

    ``trace`` is an optional callback ``trace(stage, **info)`` called around every
    substep, in execution order.
    """

    def __init__(self, config: ExperimentConfig, trace=None):
        self.config = config
        self.trace = trace
        self.mesh = build_structured_mesh(config.nx, config.ny, config.rect)
        self.scalar = FeSpace(self.mesh, SpaceKind.P1_SCALAR)
        p = config.params
        self.heat = HeatSolver(self.scalar, p, config.bc) if config.solve_heat else None
        self.stokes = StokesSolver(self.mesh, p, config.bc) if config.solve_stokes else None
        if self.stokes is not None:
            self.velocity_space, self.pressure_space = self.stokes.V, self.stokes.Q
        else:
            self.velocity_space = FeSpace(self.mesh, SpaceKind.P2_VECTOR2)
            self.pressure_space = self.scalar
        self.ch = CahnHilliardSolver(self.scalar, p)

    def _emit(self, stage, **info):
        if self.trace is not None:
            self.trace(stage, **info)

    def initial_state(self, seed: int | None = None) -> SimState:
        cfg = self.config
        c0 = initial_condition(cfg.init, self.scalar, cfg.params.Ch, seed)
        theta0 = self.scalar.constant(cfg.theta0)
        explicit = self.ch.explicit_term(c0, beta_of(theta0))
        mu0 = Field(self.scalar, self.ch.initial_mu(c0, explicit))
        return SimState(
            step=0, time=0.0, c=c0, mu=mu0,
            u=self.velocity_space.zeros(), p=self.pressure_space.zeros(), theta=theta0,
        )

    def step(self, state: SimState) -> SimState:
        cfg = self.config
        m = state.step + 1
        try:
            stage = "heat"
            if self.heat is not None:
                self._emit("heat", velocity=state.u, step=m)
                theta = self.heat.step(state.theta, state.u)
                check_nonnegative(theta, m)
            else:
                theta = state.theta
            stage = "stokes"
            self._emit("coefficients", c=state.c, step=m)
            divergence = 0.0
            if self.stokes is not None:
                self._emit("stokes", c=state.c, step=m)
                u, p = self.stokes.solve(state.c)
                divergence = self.stokes.divergence_residual(u, p)
            else:
                u, p = self.velocity_space.zeros(), self.pressure_space.zeros()
            stage = "cahn_hilliard"
            beta = Field(self.scalar, beta_of(theta.coeffs))
            self._emit("cahn_hilliard", velocity=u, beta=beta, step=m)
            c, mu, report = self.ch.step(
                state.c, u if self.stokes is not None else None, beta,
                tol=cfg.newton_tol, max_iter=cfg.newton_max_iter,
            )
        except Exception as exc:  # attach the step index
            raise SimulationError(m, stage, exc) from exc
        return SimState(step=m, time=m * cfg.params.dt, c=c, mu=mu, u=u, p=p, theta=theta,
                        newton=report, divergence=divergence)

    def record(self, state: SimState) -> diagnostics.DiagnosticsRecord:
        return diagnostics.record(
            state.step, state.time, state.c, state.theta,
            state.u if self.stokes is not None else None,
            self.config.params.Ch, state.divergence, state.newton,
        )

    def run(self, out_dir=None, seed: int | None = None, callback=None) -> RunResult:
        """Integrate to ``t_final``; writes CSV, VTK snapshots and the manifest to ``out_dir``.

        On failure the diagnostics gathered so far are flushed before re-raising.
        """
        from . import output

        cfg = self.config
        start = time.perf_counter()
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        files: list[str] = []
        state = self.initial_state(seed)
        records = [self.record(state)]
        reports = []
        theta_min = float(state.theta.coeffs.min())
        max_div = 0.0

        def snapshot(s):
            if out is not None and cfg.snapshots:
                path = out / f"snapshot_{s.step:06d}.vtk"
                output.write_vtk(s, path)
                files.append(path.name)

        snapshot(state)
        failure = None
        try:
            for _ in range(cfg.n_steps):
                state = self.step(state)
                reports.append(state.newton)
                theta_min = min(theta_min, float(state.theta.coeffs.min()))
                max_div = max(max_div, state.divergence)
                if state.step % cfg.cadence == 0:
                    records.append(self.record(state))
                    snapshot(state)
                if callback is not None:
                    callback(state)
        except SimulationError as exc:
            failure = exc
        wall = time.perf_counter() - start
        result = RunResult(cfg, state, records, files, wall, theta_min, max_div, reports)
        if out is not None:
            output.write_diagnostics_csv(records, out / "diagnostics.csv")
            files.append("diagnostics.csv")
            output.write_run_manifest(result, out, seed=seed, failure=failure)
        if failure is not None:
            raise failure
        return result


def step(state: SimState, config: ExperimentConfig, simulation: Simulation | None = None) -> SimState:
    """Advance ``state`` by one coupled step (builds the solvers when none are given)."""
    return (simulation or Simulation(config)).step(state)


def run(config: ExperimentConfig, out_dir=None, seed: int | None = None) -> RunResult:
    return Simulation(config).run(out_dir, seed)
