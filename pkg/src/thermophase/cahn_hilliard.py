"""Convex-splitting step of the convective Cahn-Hilliard system, solved by damped Newton."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    NONLINEAR_DEGREE,
    Factorization,
    FeSpace,
    Field,
    assemble_convection,
    assemble_stiffness,
    quadrature,
)
from .physics import Params, SplitViolation

MIN_DAMPING = 2.0**-10


@dataclass
class NewtonReport:
    iterations: int = 0
    residual: float = float("nan")
    damping: list = field(default_factory=list)
    converged: bool = False


class NewtonDiverged(RuntimeError):
    def __init__(self, message: str, report: NewtonReport):
        super().__init__(message)
        self.report = report


class CahnHilliardSolver:
    """Residual, Jacobian and Newton loop for one P1 space.

    The unknown is the stacked vector ``[c, mu]``. Nonlinear integrals use the
    degree-6 rule through two sparse operators: ``interp`` maps nodal values to
    quadrature points and ``project`` integrates quadrature values against the
    basis.
    """

    def __init__(self, space: FeSpace, params: Params):
        if space.is_vector:
            raise ValueError("Cahn-Hilliard unknowns live in a scalar P1 space")
        self.space = space
        self.params = params
        self.M = space.mass_matrix
        self.K = assemble_stiffness(space)
        rule = quadrature(NONLINEAR_DEGREE)
        vals, _ = space.basis(rule)
        jw = space.geometry.weights(rule)
        T, nq = jw.shape
        nodes = space.element_nodes
        rows = np.repeat(np.arange(T * nq), nodes.shape[1])
        cols = np.repeat(nodes, nq, axis=0).ravel()
        data = np.tile(vals, (T, 1)).ravel()
        self.interp = sp.csr_matrix((data, (rows, cols)), shape=(T * nq, space.dof_count))
        self.weights = jw.ravel()
        self.project = (self.interp.T @ sp.diags(self.weights)).tocsr()
        self._mass_lu = Factorization(self.M)

    # -- pieces of the residual ------------------------------------------------
    def _beta_q(self, beta):
        if isinstance(beta, Field):
            return self.interp @ beta.coeffs
        return np.full(self.weights.shape, float(beta))

    def _check_split(self, beta):
        worst = float(np.max(beta.coeffs)) if isinstance(beta, Field) else float(beta)
        if self.params.A + 1.0 - worst < 0:
            raise SplitViolation(worst, self.params.A)

    def explicit_term(self, c_old: Field, beta) -> np.ndarray:
        """``int 2 (A + 1 - beta) c_old phi``."""
        A = self.params.A
        cq = self.interp @ c_old.coeffs
        return self.project @ (2.0 * (A + 1.0 - self._beta_q(beta)) * cq)

    def implicit_term(self, c: np.ndarray) -> np.ndarray:
        """``int (8 c^3 + 2 A c) phi``."""
        cq = self.interp @ c
        return self.project @ (8.0 * cq**3 + 2.0 * self.params.A * cq)

    def implicit_jacobian(self, c: np.ndarray) -> sp.csr_matrix:
        """Weighted mass matrix with weight ``24 c^2 + 2 A``."""
        cq = self.interp @ c
        w = 24.0 * cq**2 + 2.0 * self.params.A
        return (self.project @ sp.diags(w) @ self.interp).tocsr()

    def convection(self, velocity: Field | None):
        if velocity is None or not np.any(velocity.coeffs):
            return None
        return assemble_convection(self.space, velocity)

    def _residual(self, c, mu, c_old: Field, conv, explicit, source=None):
        p = self.params
        r1 = self.M @ (c - c_old.coeffs) / p.dt + self.K @ mu / p.Pe
        if conv is not None:
            r1 = r1 + conv @ c
        if source is not None:
            r1 = r1 - source
        r2 = self.M @ mu - p.Ch**2 * (self.K @ c) - self.implicit_term(c) + explicit
        return r1, r2

    def _jacobian(self, c, conv) -> sp.csc_matrix:
        p = self.params
        j11 = self.M / p.dt
        if conv is not None:
            j11 = j11 + conv
        j21 = -(p.Ch**2) * self.K - self.implicit_jacobian(c)
        return sp.bmat([[j11, self.K / p.Pe], [j21, self.M]], format="csc")

    def residual(self, c, mu, c_old: Field, velocity: Field | None = None, beta=0.0, source=None):
        """Residual pair ``(R1, R2)`` of the discrete step at nodal ``c`` and ``mu``."""
        c = c.coeffs if isinstance(c, Field) else np.asarray(c, float)
        mu = mu.coeffs if isinstance(mu, Field) else np.asarray(mu, float)
        return self._residual(c, mu, c_old, self.convection(velocity),
                              self.explicit_term(c_old, beta), source)

    def jacobian(self, c, velocity: Field | None = None) -> sp.csc_matrix:
        """Jacobian of ``[R1; R2]`` with respect to ``[c; mu]``."""
        c = c.coeffs if isinstance(c, Field) else np.asarray(c, float)
        return self._jacobian(c, self.convection(velocity))

    def initial_mu(self, c_old: Field, explicit: np.ndarray) -> np.ndarray:
        """Chemical potential from the splitting formula evaluated at ``c_old``."""
        c = c_old.coeffs
        rhs = self.params.Ch**2 * (self.K @ c) + self.implicit_term(c) - explicit
        return self._mass_lu.solve(rhs)

    # -- Newton ----------------------------------------------------------------
    def step(self, c_old: Field, velocity: Field | None = None, beta=0.0, tol: float = 1e-10,
             max_iter: int = 50, source=None):
        """Solve for ``(c_new, mu_new)``; returns them with a :class:`NewtonReport`.

        ``beta`` is a nodal P1 field or a constant. ``source`` is an optional load
        vector subtracted from the first equation (verification only).
        """
        if c_old.space.mesh is not self.space.mesh:
            raise ValueError("phase field is on a different mesh")
        if tol <= 0:
            raise ValueError("tolerance must be positive")
        self._check_split(beta)
        conv = self.convection(velocity)
        explicit = self.explicit_term(c_old, beta)
        n = self.space.dof_count
        x = np.concatenate([c_old.coeffs, self.initial_mu(c_old, explicit)])

        def res(x):
            r1, r2 = self._residual(x[:n], x[n:], c_old, conv, explicit, source)
            return np.concatenate([r1, r2])

        report = NewtonReport()
        r = res(x)
        rnorm = float(np.linalg.norm(r))
        while True:
            report.residual = rnorm
            if rnorm <= tol:
                report.converged = True
                break
            if report.iterations >= max_iter:
                raise NewtonDiverged(
                    f"Newton hit the iteration cap {max_iter} (residual {rnorm:.3e})", report
                )
            J = self._jacobian(x[:n], conv)
            dx = Factorization(J).solve(-r)
            lam = 1.0
            while True:
                trial = x + lam * dx
                r_trial = res(trial)
                tnorm = float(np.linalg.norm(r_trial))
                if np.isfinite(tnorm) and tnorm < rnorm:
                    break
                lam *= 0.5
                if lam < MIN_DAMPING:
                    report.damping.append(lam)
                    raise NewtonDiverged(
                        f"Newton damping fell below 2^-10 at iteration {report.iterations} "
                        f"(residual {rnorm:.3e})", report
                    )
            report.damping.append(lam)
            report.iterations += 1
            x, r, rnorm = trial, r_trial, tnorm
        return Field(self.space, x[:n]), Field(self.space, x[n:]), report


def ch_step(c_old: Field, velocity: Field | None, beta, params: Params,
            tol: float = 1e-10, max_iter: int = 50):
    return CahnHilliardSolver(c_old.space, params).step(c_old, velocity, beta, tol, max_iter)


def ch_residual(c_new: Field, mu_new: Field, c_old: Field, velocity: Field | None, beta,
                params: Params):
    return CahnHilliardSolver(c_old.space, params).residual(c_new, mu_new, c_old, velocity, beta)
