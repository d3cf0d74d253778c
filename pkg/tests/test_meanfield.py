import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosedyn.errors import StabilityError
from bosedyn.lattice import (
    Grid1D,
    PairPotential,
    kinetic_eigenvalues,
    l2_norm,
    laplacian_matrix,
    normalize,
    plane_wave,
)
from bosedyn.meanfield import (
    MeanFieldProblem,
    gp_energy,
    gp_evolve,
    gp_minimize,
    hartree_energy,
    hartree_evolve,
)

from conftest import random_orbital, smooth_potential


@pytest.fixture
def grid16():
    return Grid1D(16, 0.25)


def test_problem_validation(grid4, rng):
    phi = random_orbital(rng, grid4)
    V = smooth_potential(grid4)
    with pytest.raises(ValueError):
        MeanFieldProblem(grid4, phi)
    with pytest.raises(ValueError):
        MeanFieldProblem(grid4, phi, kernel=V, coupling=1.0)
    with pytest.raises(ValueError):
        MeanFieldProblem(grid4, 2 * phi, kernel=V)
    with pytest.raises(ValueError):
        hartree_evolve(MeanFieldProblem(grid4, phi, coupling=1.0), 0.1)
    with pytest.raises(ValueError):
        gp_evolve(MeanFieldProblem(grid4, phi, kernel=V), 0.1)


def test_hartree_conserves_mass_and_energy(grid16, rng):
    phi = random_orbital(rng, grid16)
    V = PairPotential.gaussian(grid16, 3.0, 0.5)
    traj = hartree_evolve(MeanFieldProblem(grid16, phi, kernel=V), 1.0, dt=1e-3)
    e0 = hartree_energy(grid16, phi, V)
    for s in traj.states[::100]:
        assert l2_norm(grid16, s) == pytest.approx(1.0, abs=1e-12)
        assert hartree_energy(grid16, s, V) == pytest.approx(e0, abs=1e-8)


def test_gp_conserves_mass_and_energy_to_fourth_order(grid16, rng):
    phi = random_orbital(rng, grid16)
    e0 = gp_energy(grid16, phi, 5.0)
    drifts = []
    for dt in (1e-3, 5e-4):
        traj = gp_evolve(MeanFieldProblem(grid16, phi, coupling=5.0), 1.0, dt=dt)
        assert np.abs(np.sqrt(grid16.h) * np.linalg.norm(traj.states, axis=1) - 1).max() <= 1e-12
        drifts.append(max(abs(gp_energy(grid16, s, 5.0) - e0) for s in traj.states))
    assert drifts[0] <= 1e-8 * abs(e0)
    assert drifts[0] / drifts[1] >= 12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 15), st.floats(0.0, 5.0))
def test_plane_wave_is_exact_solution(m, strength):
    grid = Grid1D(16, 0.25)
    V = PairPotential.gaussian(grid, strength, 0.5)
    phi = plane_wave(grid, m)
    t = 0.5
    traj = hartree_evolve(MeanFieldProblem(grid, phi, kernel=V), t, dt=1e-2)
    c = V.mass / grid.L
    exact = np.exp(-1j * (kinetic_eigenvalues(grid)[m] + c) * t) * phi
    assert l2_norm(grid, traj.states[-1] - exact) <= 1e-10


@pytest.mark.parametrize("order,ratio", [(2, 4.0), (4, 16.0)])
def test_time_step_order(grid16, rng, order, ratio):
    phi = random_orbital(rng, grid16)
    V = PairPotential.gaussian(grid16, 3.0, 0.5)
    prob = MeanFieldProblem(grid16, phi, kernel=V)
    ref = hartree_evolve(prob, 0.5, dt=1e-4, order=4).states[-1]
    e1 = l2_norm(grid16, hartree_evolve(prob, 0.5, dt=1e-2, order=order).states[-1] - ref)
    e2 = l2_norm(grid16, hartree_evolve(prob, 0.5, dt=5e-3, order=order).states[-1] - ref)
    assert e1 / e2 == pytest.approx(ratio, rel=0.15)


def test_gauge_covariance(grid16, rng):
    phi = random_orbital(rng, grid16)
    V = PairPotential.gaussian(grid16, 2.0, 0.5)
    c, t = 0.7, 0.4
    plain = hartree_evolve(MeanFieldProblem(grid16, phi, kernel=V), t, dt=1e-3).states[-1]
    shifted = hartree_evolve(MeanFieldProblem(grid16, phi, kernel=V, V_ext=np.full(16, c)),
                             t, dt=1e-3).states[-1]
    assert l2_norm(grid16, shifted - np.exp(-1j * c * t) * plain) <= 1e-12


def test_local_kernel_hartree_equals_gp(grid16, rng):
    phi = random_orbital(rng, grid16)
    a = hartree_evolve(MeanFieldProblem(grid16, phi, kernel=PairPotential.local(grid16, 4.0)), 0.3)
    b = gp_evolve(MeanFieldProblem(grid16, phi, coupling=4.0), 0.3)
    assert l2_norm(grid16, a.states[-1] - b.states[-1]) <= 1e-12


def test_trajectory_interpolation(grid4, rng):
    phi = random_orbital(rng, grid4)
    traj = hartree_evolve(MeanFieldProblem(grid4, phi, kernel=smooth_potential(grid4)), 0.1, dt=1e-2)
    np.testing.assert_allclose(traj.at(0.05), traj.states[5])
    np.testing.assert_allclose(traj.at(0.055), 0.5 * (traj.states[5] + traj.states[6]))
    with pytest.raises(ValueError):
        traj.at(0.2)


def test_step_guards(grid16, rng):
    phi = random_orbital(rng, grid16)
    prob = MeanFieldProblem(grid16, phi, kernel=smooth_potential(grid16))
    with pytest.raises(StabilityError):
        hartree_evolve(prob, 1.0, dt=0.5)
    with pytest.raises(ValueError):
        hartree_evolve(prob, 0.1, dt=0.03)
    with pytest.raises(ValueError):
        hartree_evolve(prob, 0.1, dt=0.01, order=3)


# -- minimizer ------------------------------------------------------------------------

def test_minimizer_linear_case_matches_eigh():
    grid = Grid1D(32, 0.3)
    V_ext = (grid.x - grid.L / 2) ** 2
    out = gp_minimize(0.0, V_ext, grid, tol=1e-9)
    evals, evecs = np.linalg.eigh(laplacian_matrix(grid) + np.diag(V_ext))
    assert out["energy"] == pytest.approx(evals[0], abs=1e-9)
    v0 = evecs[:, 0] / np.sqrt(grid.h)
    assert abs(abs(np.vdot(v0, out["phi"])) * grid.h - 1) <= 1e-9


@pytest.mark.parametrize("mu", [0.0, 1.0, 10.0])
def test_minimizer_free_case_is_constant(mu):
    grid = Grid1D(16, 0.5)
    phi0 = normalize(grid, 1 + 0.3 * np.cos(2 * np.pi * grid.x / grid.L))
    out = gp_minimize(mu, None, grid, phi0=phi0)
    assert out["energy"] == pytest.approx(mu / (2 * grid.L), abs=1e-10)
    assert np.abs(np.abs(out["phi"]) - 1 / np.sqrt(grid.L)).max() <= 1e-6


def test_minimizer_energies_monotone():
    grid = Grid1D(64, 10 / 64)
    V_ext = (grid.x - grid.L / 2) ** 2
    finals = []
    for mu in (0.0, 1.0, 10.0):
        out = gp_minimize(mu, V_ext, grid)
        es = out["energies"]
        assert np.all(np.diff(es) <= 1e-12 * max(1.0, abs(es[-1])))
        assert out["gradient_norm"] <= 1e-8
        finals.append(out["energy"])
    assert finals == sorted(finals)


def test_minimizer_rejects_focusing():
    with pytest.raises(ValueError):
        gp_minimize(-1.0, None, Grid1D(8, 0.5))
