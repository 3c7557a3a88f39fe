import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermophase.physics import (
    Params,
    ParameterError,
    SplitViolation,
    beta_of,
    bulk_f,
    bulk_f_c,
    eta_of,
    minima_location,
    rho_of,
    split_derivatives,
    stabilization_for,
)


@pytest.mark.parametrize("theta", [0.0, 1.5, 0.2])
def test_beta_is_identity(theta):
    assert beta_of(theta) == theta


def test_bulk_f_values():
    assert bulk_f(0.0, 0.7) == 0.0
    assert bulk_f(0.5, 0.0) == pytest.approx(-0.125, abs=1e-15)
    c = np.linspace(-1, 1, 11)
    assert np.allclose(bulk_f(c, 1.0), 2 * c**4, atol=0)


def test_bulk_f_c_roots():
    assert bulk_f_c(0.0, 0.3) == 0.0
    assert abs(bulk_f_c(math.sqrt(0.8) / 2, 0.2)) < 1e-12
    assert abs(bulk_f_c(0.5, 0.0)) < 1e-15


def test_split_examples():
    cvx, ccv = split_derivatives(0.4, 0.3, 1.0, 0.0)
    assert ccv == 0.0
    _, ccv = split_derivatives(0.1, 0.3, 1.5, 0.5)
    assert ccv == 0.0
    cvx, _ = split_derivatives(0.5, 0.1, 0.0, 0.0)
    assert cvx == pytest.approx(1.0, abs=1e-15)


def test_split_violation_names_beta():
    with pytest.raises(SplitViolation, match="beta_max") as info:
        split_derivatives(0.1, 0.1, 1.5, 0.2)
    assert info.value.beta == 1.5


def test_split_recombines_to_derivative_on_grid():
    c = np.linspace(-1, 1, 201)
    for beta in np.linspace(0, 2, 21):
        A = max(0.0, beta - 1.0)
        cvx, ccv = split_derivatives(c, c, beta, A)
        assert np.abs(cvx + ccv - bulk_f_c(c, beta)).max() <= 1e-13


@given(c=st.floats(-1, 1), beta=st.floats(0, 2))
def test_derivative_matches_finite_difference(c, beta):
    h = 1e-6
    fd = (bulk_f(c + h, beta) - bulk_f(c - h, beta)) / (2 * h)
    assert abs(fd - bulk_f_c(c, beta)) <= 1e-6


@pytest.mark.parametrize("beta", [0.0, 0.2, 0.5, 0.9, 1.0, 1.5, 2.0])
def test_argmin_of_potential(beta):
    c = np.arange(-10000, 10001) * 1e-4
    found = abs(c[np.argmin(bulk_f(c, beta))])
    assert abs(found - minima_location(beta)) <= 1e-4
    expected = math.sqrt(1 - beta) / 2 if beta < 1 else 0.0
    assert minima_location(beta) == pytest.approx(expected)


def test_mixture_laws():
    assert rho_of(-0.5, 0.3) == 1.0 and eta_of(-0.5, 7.0) == 1.0
    assert eta_of(0.5, 0.08) == pytest.approx(0.08)
    assert rho_of(0.0, 0.0009) == pytest.approx(0.50045)
    # clamped outside the pure-phase range
    assert rho_of(0.9, 0.0009) == rho_of(0.5, 0.0009)
    assert eta_of(-3.0, 0.08) == 1.0
    c = np.linspace(-0.5, 0.5, 50)
    assert np.all(np.diff(rho_of(c, 0.5)) < 0)
    assert np.all(np.diff(eta_of(c, 1.0)) == 0)
    assert np.all(eta_of(np.linspace(-2, 2, 50), 0.08) > 0)


def test_params_defaults_and_validation():
    p = Params(beta_max=1.575)
    assert p.A == pytest.approx(stabilization_for(1.575)) and p.A == pytest.approx(0.575)
    assert Params(beta_max=0.3).A == 0.0
    for bad in (dict(Pe=0), dict(dt=-1), dict(Ch=0), dict(Pe_theta=0), dict(lambda_rho=0),
                dict(lambda_eta=-1), dict(g_hat=(0.0, -2.0)), dict(A=-0.1)):
        with pytest.raises(ParameterError):
            Params(**bad)
    with pytest.raises(SplitViolation, match="beta_max"):
        Params(beta_max=1.5, A=0.0)
