import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermophase.diagnostics import (
    UndefinedCentroid,
    discrete_energy,
    extract_interface,
    heavy_phase_centroid_height,
    l2_variance,
    polyline_length,
    strip_mean_abs,
    total_mass,
    velocity_l2,
)
from thermophase.fem import FeSpace, Field, SpaceKind, quadrature
from thermophase.mesh import build_structured_mesh


def p1(nx, ny=None, rect=(0, 0, 1, 1)):
    return FeSpace(build_structured_mesh(nx, ny or nx, rect))


def test_total_mass_constants():
    assert total_mass(p1(4).constant(0.2)) == pytest.approx(0.2, abs=1e-15)
    assert total_mass(p1(4, 2, (0, 0, 2, 1)).constant(0.2)) == pytest.approx(0.4, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_total_mass_oracle_and_linearity(seed, a, b):
    space = p1(5, 3, (0, 0, 1.7, 1))
    rng = np.random.Generator(np.random.Philox(seed))
    c1 = Field(space, rng.uniform(-1, 1, space.dof_count))
    c2 = Field(space, rng.uniform(-1, 1, space.dof_count))
    rule = quadrature(2)
    oracle = float(np.sum(space.geometry.weights(rule) * c1.at_quadrature(rule)))
    assert abs(total_mass(c1) - oracle) <= 1e-12
    combo = Field(space, a * c1.coeffs + b * c2.coeffs)
    assert total_mass(combo) == pytest.approx(a * total_mass(c1) + b * total_mass(c2), abs=1e-13)


def test_energy_closed_forms():
    space = p1(4)
    assert discrete_energy(space.constant(0.0), 0.3, 0.01) == 0.0
    assert discrete_energy(space.constant(0.5), 0.0, 0.01) == pytest.approx(-0.125, abs=1e-14)
    for beta in (0.0, 0.2, 0.7):
        cstar = math.sqrt(1 - beta) / 2
        assert discrete_energy(space.constant(cstar), beta, 0.01) == pytest.approx(-(1 - beta) ** 2 / 8, abs=1e-14)
    wide = p1(4, 2, (0, 0, 2, 1))
    assert discrete_energy(wide.constant(0.5), 0.0, 0.01) == pytest.approx(-0.25, abs=1e-14)


def test_energy_gradient_term():
    # c = x: int Ch^2/2 |grad c|^2 = Ch^2/2 plus the bulk part int 2x^4 - x^2 = 2/5 - 1/3
    space = p1(6)
    c = space.interpolate(lambda x, y: x)
    assert discrete_energy(c, 0.0, 0.1) == pytest.approx(0.005 + 2 / 5 - 1 / 3, abs=1e-3)
    assert discrete_energy(c, 0.0, 0.1) - discrete_energy(c, 0.0, 0.0) == pytest.approx(0.005, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_is_even(seed):
    space = p1(5)
    c = np.random.Generator(np.random.Philox(seed)).uniform(-0.6, 0.6, space.dof_count)
    assert discrete_energy(Field(space, c), 0.2, 0.05) == pytest.approx(
        discrete_energy(Field(space, -c), 0.2, 0.05), abs=1e-14)


def test_variance():
    space = p1(8)
    assert l2_variance(space.constant(0.3)) == pytest.approx(0.0, abs=1e-15)
    # y - 1/2 has variance 1/12 in the continuum; P1 interpolation of a linear field is exact
    assert l2_variance(space.interpolate(lambda x, y: y - 0.5)) == pytest.approx(1 / 12, abs=1e-12)


def test_velocity_norm():
    V = FeSpace(build_structured_mesh(3, 3, (0, 0, 2, 1)), SpaceKind.P2_VECTOR2)
    assert velocity_l2(V.constant((3.0, 4.0))) == pytest.approx(5.0 * math.sqrt(2.0))
    assert velocity_l2(V.zeros()) == 0.0


def test_linear_level_set_is_a_unit_segment():
    space = p1(8)
    lines = extract_interface(space.interpolate(lambda x, y: y - 0.5), 0.0)
    assert polyline_length(lines) == pytest.approx(1.0, abs=1e-10)
    pts = np.vstack(lines)
    assert np.abs(pts[:, 1] - 0.5).max() < 1e-12
    assert len(lines) == 1


def test_two_layer_interface_single_polyline():
    space = p1(10)
    h = 0.1
    c = space.interpolate(lambda x, y: 0.5 * np.tanh((y - 0.55) / (math.sqrt(2) * 0.01)))
    lines = extract_interface(c, 0.0)
    assert len(lines) == 1
    pts = lines[0]
    assert np.abs(pts[:, 1] - 0.55).max() <= h
    assert pts[:, 0].min() == 0.0 and pts[:, 0].max() == 1.0


def test_constant_field_has_no_interface():
    assert extract_interface(p1(4).constant(0.3), 0.0) == []


def test_closed_loop_and_sign_flip_symmetry():
    space = p1(20)
    c = space.interpolate(lambda x, y: 0.3 - np.hypot(x - 0.5, y - 0.5))
    lines = extract_interface(c, 0.0)
    assert len(lines) == 1 and np.allclose(lines[0][0], lines[0][-1])
    assert polyline_length(lines) == pytest.approx(2 * math.pi * 0.3, rel=1e-2)
    flipped = extract_interface(Field(space, -c.coeffs), 0.0)
    a = np.unique(np.round(np.vstack(lines), 12), axis=0)
    b = np.unique(np.round(np.vstack(flipped), 12), axis=0)
    assert np.array_equal(a, b)


def test_centroid_examples():
    space = p1(16)
    bottom = space.interpolate(lambda x, y: np.where(y <= 0.25, -0.5, 0.5))
    # P1 smearing over one cell above y = 0.25 moves the centroid slightly up
    assert heavy_phase_centroid_height(bottom) == pytest.approx(0.125, abs=1 / 16)
    sym = space.interpolate(lambda x, y: np.cos(2 * np.pi * y) * 0.5)
    assert heavy_phase_centroid_height(sym) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedCentroid):
        heavy_phase_centroid_height(space.constant(0.5))


def test_strip_mean_abs():
    space = p1(8, 4, (0, 0, 2, 1))
    c = space.interpolate(lambda x, y: np.where(x < 1.0, -0.4, 0.1))
    assert strip_mean_abs(c, 0.0, 0.5) == pytest.approx(0.4)
    assert strip_mean_abs(c, 1.5, 2.0) == pytest.approx(0.1)
