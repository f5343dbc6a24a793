import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from extremal_shape.errors import GridMismatchError, ParameterError
from extremal_shape.fields import (
    Field,
    apply_laplacian,
    cartesian_partials,
    dirichlet_energy,
    dirichlet_form,
    integrate,
    is_zero_average,
    lp_norm,
    project_zero_average,
    read_field_csv,
    rotate,
    write_field_csv,
)
from extremal_shape.geometry import build_ball_grid

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def test_integrate_and_lp_of_constant(disc32):
    one = Field(disc32, np.ones(disc32.n_nodes))
    assert integrate(one) == pytest.approx(math.pi)
    assert lp_norm(one, 3.0) == pytest.approx(math.pi ** (1 / 3))


def test_lp_norm_large_p_stays_finite(disc32):
    f = Field(disc32, 1e3 * np.ones(disc32.n_nodes))
    assert lp_norm(f, 400.0) == pytest.approx(1e3 * math.pi ** (1 / 400), rel=1e-12)


def test_lp_norm_rejects_small_p(disc32):
    with pytest.raises(ParameterError):
        lp_norm(Field(disc32, np.ones(disc32.n_nodes)), 0.5)


def test_energy_of_linear_function():
    # |grad x1|^2 integrates to pi; the boundary half cell costs O(h)
    g = build_ball_grid(2, 64, 128)
    f = Field.from_function(g, lambda r, t: r * np.cos(t))
    assert dirichlet_energy(f) == pytest.approx(math.pi, rel=1e-2)


def test_cartesian_partials_of_linear_function(disc32, ball3):
    for g in (disc32, ball3):
        f = Field.from_function(g, lambda r, t: r * np.cos(t))
        d_e, d_tau = cartesian_partials(f)
        assert np.max(np.abs(d_e.values - 1.0)) < 1e-12
        assert np.max(np.abs(d_tau.values)) < 1e-12


def test_partials_transverse(disc32):
    f = Field.from_function(disc32, lambda r, t: r * np.sin(t))
    d_e, d_tau = cartesian_partials(f)
    assert np.max(np.abs(d_e.values)) < 1e-12
    assert np.max(np.abs(d_tau.values - 1.0)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_integration_by_parts(seed):
    g = build_ball_grid(2, 12, 16)
    rng = np.random.default_rng(seed)
    f = Field(g, rng.standard_normal(g.n_nodes))
    h = Field(g, rng.standard_normal(g.n_nodes))
    lhs = integrate(Field(g, h.values * apply_laplacian(f).values))
    assert lhs == pytest.approx(dirichlet_form(f, h), rel=1e-10, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_projection_gives_zero_average(seed):
    g = build_ball_grid(3, 12, 12)
    f = Field(g, np.random.default_rng(seed).standard_normal(g.n_nodes) + 3.0)
    z = project_zero_average(f)
    assert is_zero_average(z)
    assert dirichlet_energy(z) == pytest.approx(dirichlet_energy(f), rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(min_value=-3.0, max_value=3.0))
def test_rotation_commutes_with_energy(seed, angle):
    g = build_ball_grid(2, 10, 16)
    table = np.random.default_rng(seed).standard_normal(g.shape)
    coef = scipy.fft.rfft(table, axis=1)
    coef[:, -1] = 0.0  # the Nyquist mode cannot be rotated on the grid
    f = Field(g, scipy.fft.irfft(coef, n=g.M_theta, axis=1))
    assert dirichlet_energy(rotate(f, angle)) == pytest.approx(dirichlet_energy(f), rel=1e-10)


def test_rotation_by_grid_angle_is_shift(disc32):
    f = Field(disc32, np.arange(disc32.n_nodes, dtype=float))
    k = 3
    out = rotate(f, k * disc32.dtheta)
    assert np.array_equal(out.table, np.roll(f.table, k, axis=1))


def test_rotation_interpolates_cosine(disc32):
    f = Field.from_function(disc32, lambda r, t: r * np.cos(t))
    out = rotate(f, 0.3)
    expect = disc32.node_r * np.cos(disc32.node_theta - 0.3)
    assert np.max(np.abs(out.values - expect)) < 1e-12


def test_rotation_needs_disc(ball3):
    with pytest.raises(ParameterError):
        rotate(Field(ball3, np.zeros(ball3.n_nodes)), 0.1)


def test_grid_mismatch(disc32, ball3):
    with pytest.raises(GridMismatchError):
        Field(disc32, np.zeros(5))
    with pytest.raises(GridMismatchError):
        dirichlet_form(Field(disc32, np.zeros(disc32.n_nodes)), Field(ball3, np.zeros(ball3.n_nodes)))


def test_csv_roundtrip(annulus2, disc32, tmp_path):
    f = Field(annulus2, np.random.default_rng(1).standard_normal(annulus2.n_nodes))
    write_field_csv(f, tmp_path / "f.csv")
    back = read_field_csv(tmp_path / "f.csv", annulus2)
    assert np.array_equal(back.values, f.values)
    with pytest.raises(GridMismatchError):
        read_field_csv(tmp_path / "f.csv", disc32)
