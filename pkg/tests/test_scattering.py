import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosedyn.errors import ConvergenceError
from bosedyn.lattice import Grid1D, normalize
from bosedyn.scattering import (
    RadialGrid,
    RadialPotential,
    check_identity,
    correlation_kernel,
    coupling_constants,
    scaled_mass,
    scaled_scattering_length,
    smooth_bump,
    soft_sphere,
    soft_sphere_length,
    solve_zero_energy,
)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 50.0), st.floats(0.3, 3.0))
def test_soft_sphere_matches_closed_form(strength, R):
    s = solve_zero_energy(soft_sphere(strength, R))
    exact = soft_sphere_length(strength, R)
    assert s.a0 == pytest.approx(exact, rel=1e-8)
    assert s.error_estimate <= 1e-8 * max(exact, R)


def test_zero_potential():
    s = solve_zero_energy(soft_sphere(0.0, 1.0))
    assert abs(s.a0) <= 1e-12
    np.testing.assert_allclose(s.profile, 1.0, atol=1e-12)


@pytest.mark.parametrize("V", [soft_sphere(3.0, 1.0), smooth_bump(5.0, 0.7), soft_sphere(40.0, 2.0)])
def test_integral_identity(V):
    s = solve_zero_energy(V)
    assert check_identity(s)["rel_err"] <= 1e-8


def test_solution_shape():
    s = solve_zero_energy(smooth_bump(5.0, 1.0))
    f = s.profile
    assert np.all(np.diff(f) >= -1e-12)
    assert np.all((f > 0) & (f <= 1 + 1e-12))
    r = s.nodes[s.nodes > 1.0]
    np.testing.assert_allclose(s.f(r), 1 - s.a0 / r, atol=1e-12)
    np.testing.assert_allclose(s.omega(r), s.a0 / r, atol=1e-12)


def test_born_limit():
    for eps in (1e-2, 1e-3):
        s = solve_zero_energy(smooth_bump(eps, 1.0))
        cc = coupling_constants(s)
        assert cc["g_GP"] < cc["b0"]
        assert abs(cc["g_GP"] - cc["b0"]) / cc["b0"] <= 2 * eps


def test_coupling_below_first_order():
    cc = coupling_constants(solve_zero_energy(soft_sphere(3.0, 1.0)))
    assert cc["b0"] == pytest.approx(4 * np.pi / 3 * 3.0, rel=1e-12)
    assert 0 < cc["g_GP"] < cc["b0"]


@pytest.mark.parametrize("N", [2.0, 16.0, 100.0])
def test_scaling_law(N):
    s = solve_zero_energy(smooth_bump(4.0, 1.0))
    direct = scaled_scattering_length(s, N, direct=True)
    assert direct == pytest.approx(s.a0 / N, rel=1e-8)
    assert scaled_mass(s, N) == pytest.approx(8 * np.pi * s.a0, rel=1e-8)


def test_scaled_potential_support():
    V = soft_sphere(2.0, 1.5).scaled(3.0)
    assert V.R == pytest.approx(0.5)
    assert float(V(0.4)) == pytest.approx(18.0)
    assert float(V(0.6)) == 0.0
    with pytest.raises(ValueError):
        scaled_scattering_length(solve_zero_energy(soft_sphere(1.0, 1.0)), 0.5)


def test_error_paths():
    with pytest.raises(ValueError):
        RadialGrid(4.0, 1.0)
    attractive = RadialPotential(lambda r: -np.ones_like(r), 1.0)
    with pytest.raises(ValueError):
        solve_zero_energy(attractive)
    with pytest.raises(ConvergenceError):
        solve_zero_energy(soft_sphere(3.0, 1.0), fit_tol=-1.0)


def test_correlation_kernel():
    s = solve_zero_energy(soft_sphere(3.0, 1.0))
    grid = Grid1D(8, 0.5)
    phi = normalize(grid, 1 + 0.2 * np.cos(2 * np.pi * grid.x / grid.L))
    ker = correlation_kernel(s, 4.0, phi, grid)
    np.testing.assert_allclose(ker.values, ker.values.T)
    d = grid.distances()
    expected = -4.0 * s.omega(4.0 * d[3])[0] * phi[0] * phi[3]
    assert ker.values[0, 3] == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        correlation_kernel(s, 40.0, phi, grid, tail=False)
