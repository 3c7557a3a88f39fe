"""Nondimensional parameters, the temperature-dependent Landau potential, mixture laws."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BETA_SAFETY = 1.05


class ParameterError(ValueError):
    """A physically invalid parameter set."""


class SplitViolation(ParameterError):
    """The stabilisation ``A`` is too small for the temperatures encountered."""

    def __init__(self, beta: float, A: float):
        self.beta = beta
        self.A = A
        super().__init__(
            f"convex-concave split violated: A + 1 - beta = {A + 1 - beta:.6g} < 0 "
            f"(beta_max={beta:.6g}, A={A:.6g}; need A >= {max(0.0, beta - 1):.6g})"
        )


def stabilization_for(beta_max: float) -> float:
    """Smallest stabilisation keeping the split convex-concave up to ``beta_max``."""
    return max(0.0, beta_max - 1.0)


@dataclass(frozen=True)
class Params:
    """Nondimensional groups and discretisation constants.

    ``A`` defaults to ``max(0, beta_max - 1)``.
    """

    Pe: float = 1000.0
    Pe_theta: float = 10.0
    Ch: float = 0.01
    lambda_rho: float = 1.0
    lambda_eta: float = 1.0
    G: float = 0.0
    dt: float = 0.01
    beta_max: float = 0.0
    A: float | None = None
    g_hat: tuple[float, float] = (0.0, -1.0)

    def __post_init__(self):
        if self.A is None:
            object.__setattr__(self, "A", stabilization_for(self.beta_max))
        object.__setattr__(self, "g_hat", tuple(float(v) for v in self.g_hat))
        self.validate()

    def validate(self):
        for name in ("Pe", "Pe_theta", "Ch", "dt", "lambda_rho", "lambda_eta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value}")
        if not math.isfinite(self.G):
            raise ParameterError(f"G must be finite, got {self.G}")
        if self.A < 0:
            raise ParameterError(f"A must be nonnegative, got {self.A}")
        if self.A + 1.0 - self.beta_max < 0:
            raise SplitViolation(self.beta_max, self.A)
        if len(self.g_hat) != 2 or abs(math.hypot(*self.g_hat) - 1.0) > 1e-12:
            raise ParameterError(f"g_hat must be a unit 2-vector, got {self.g_hat}")


def beta_of(theta):
    """Landau coefficient of the dimensionless temperature (identity map)."""
    return theta


def bulk_f(c, beta):
    return 2.0 * c**4 - (1.0 - beta) * c**2


def bulk_f_c(c, beta):
    return 8.0 * c**3 - 2.0 * (1.0 - beta) * c


def convex_derivative(c, A):
    return 8.0 * c**3 + 2.0 * A * c


def concave_derivative(c, beta, A):
    return -2.0 * (A + 1.0 - beta) * c


def split_derivatives(c_new, c_old, beta, A):
    """Implicit convex and explicit concave parts of ``f_c``.

    Raises :class:`SplitViolation` when ``A + 1 - beta < 0`` anywhere.
    """
    beta_arr = np.asarray(beta, dtype=float)
    worst = float(beta_arr.max()) if beta_arr.size else 0.0
    if A + 1.0 - worst < 0:
        raise SplitViolation(worst, A)
    return convex_derivative(c_new, A), concave_derivative(c_old, beta, A)


def _affine(c, ratio):
    c = np.clip(c, -0.5, 0.5)
    return (0.5 - c) + (0.5 + c) * ratio


def rho_of(c, lambda_rho):
    """Nondimensional mixture density; ``c = -0.5`` is the reference phase."""
    return _affine(c, lambda_rho)


def eta_of(c, lambda_eta):
    """Nondimensional mixture viscosity; ``c = -0.5`` is the reference phase."""
    return _affine(c, lambda_eta)


def minima_location(beta: float) -> float:
    """Positive minimiser of ``bulk_f`` (0 in the single-well regime)."""
    return math.sqrt(1.0 - beta) / 2.0 if beta < 1.0 else 0.0
