import numpy as np
import pytest
from scipy.linalg import expm

from bosedyn.bogoliubov import (
    BogoliubovMap,
    QuadraticFockPropagator,
    QuadraticGenerator,
    build_generator,
    clt_variance,
    cosh_sinh,
    quadratic_fock_evolve,
    symplectic_defect,
    theta_evolve,
    verify_bogoliubov_action,
)
from bosedyn.errors import StabilityError, TruncationError
from bosedyn.fock import SqueezeKernel, build_basis, number_statistics
from bosedyn.harness.config import ExperimentConfig
from bosedyn.harness.experiments import lattice_setup
from bosedyn.lattice import Grid1D, PairPotential, laplacian_matrix, normalize
from bosedyn.meanfield import MeanFieldProblem, hartree_evolve

from conftest import random_orbital


def _instance(strength=0.5, t=0.5):
    """Two-site instance with mild pairing, cheap enough for the Fock side."""
    grid = Grid1D(2, 1.0)
    V = PairPotential.gaussian(grid, strength, 1.0)
    phi = normalize(grid, np.array([1.0, 0.5 + 0.3j]))
    traj = hartree_evolve(MeanFieldProblem(grid, phi, kernel=V), t, dt=1e-4)
    return grid, V, phi, traj


def _fock_side(grid, V, traj, t, N_max=20, sign=1.0):
    basis = build_basis(grid.M, N_max)

    def gen(s):
        g = build_generator(traj.at(s), V, grid, s)
        return QuadraticGenerator(sign * g.D, sign * g.B, s)

    return basis, QuadraticFockPropagator(basis, gen, 0.0, t, 5e-3)


def _probes(grid, basis, rng):
    pairs = [(rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M),
              rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)) for _ in range(3)]
    vectors = [basis.vacuum(), basis.basis_vector([1, 0]), basis.basis_vector([1, 1])]
    return pairs, vectors


# -- generator --------------------------------------------------------------------

def test_generator_blocks(grid4, rng):
    phi = random_orbital(rng, grid4)
    zero = build_generator(phi, PairPotential.zero(grid4), grid4)
    np.testing.assert_allclose(zero.D, laplacian_matrix(grid4), atol=1e-14)
    assert np.abs(zero.B).max() == 0
    real = build_generator(np.abs(phi), PairPotential.gaussian(grid4, 1.0, 1.0), grid4)
    assert np.abs(real.B.imag).max() <= 1e-14
    g = build_generator(phi, PairPotential.gaussian(grid4, 1.0, 1.0), grid4)
    np.testing.assert_allclose(g.D, g.D.conj().T, atol=1e-14)
    np.testing.assert_allclose(g.B, g.B.T, atol=1e-14)


def test_generator_validation():
    with pytest.raises(ValueError):
        QuadraticGenerator(np.array([[0, 1j], [1j, 0]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        QuadraticGenerator(np.eye(2), np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        BogoliubovMap(np.array([[1, 1], [0, 1]]), 0, 0)


# -- classical flow -----------------------------------------------------------------

def test_theta_identity_at_equal_times(grid4, rng):
    phi = random_orbital(rng, grid4)
    m = build_generator(phi, PairPotential.gaussian(grid4, 1.0, 1.0), grid4).matrix
    th = theta_evolve(lambda s: m, 0.3, 0.3, 1e-3)
    np.testing.assert_array_equal(th.theta, np.eye(8))


def test_free_flow_is_kinetic_exponential(grid4, rng):
    phi = random_orbital(rng, grid4)
    m = build_generator(phi, PairPotential.zero(grid4), grid4).matrix
    th = theta_evolve(lambda s: m, 0.0, 0.8, 1e-3)
    K = laplacian_matrix(grid4)
    np.testing.assert_allclose(th.U, expm(1j * K * 0.8), atol=1e-10)
    assert np.abs(th.W).max() <= 1e-14


def _default_flow(dt, t=1.0):
    cfg = ExperimentConfig()
    grid, V, phi = lattice_setup(cfg)
    traj = hartree_evolve(MeanFieldProblem(grid, phi, kernel=V), t, dt=1e-4)
    return theta_evolve(lambda s: build_generator(traj.at(s), V, grid, s).matrix, 0.0, t, dt)


def test_symplectic_defect_shrinks_with_step():
    d1 = _default_flow(1e-2).symplectic_defect
    d2 = _default_flow(5e-3).symplectic_defect
    assert d2 <= 1e-8
    assert d1 / d2 >= 16


def test_composition_order():
    cfg = ExperimentConfig()
    grid, V, phi = lattice_setup(cfg)
    traj = hartree_evolve(MeanFieldProblem(grid, phi, kernel=V), 1.0, dt=1e-4)
    gen = lambda s: build_generator(traj.at(s), V, grid, s).matrix  # noqa: E731
    full = theta_evolve(gen, 0.0, 1.0, 1e-2)
    first, second = theta_evolve(gen, 0.0, 0.5, 1e-2), theta_evolve(gen, 0.5, 1.0, 1e-2)
    assert np.abs(first.then(second).theta - full.theta).max() <= 1e-12
    assert np.abs(second.theta @ first.theta - full.theta).max() > 1e-3
    with pytest.raises(ValueError):
        second.then(first)


def test_theta_stability_error(grid4, rng):
    phi = random_orbital(rng, grid4)
    m = build_generator(phi, PairPotential.gaussian(grid4, 1.0, 1.0), grid4).matrix
    with pytest.raises(StabilityError):
        theta_evolve(lambda s: m, 0.0, 5.0, 0.5)


def test_symplectic_defect_of_exact_maps(rng):
    K = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    K = 0.3 * (K + K.T)
    c, s = cosh_sinh(K)
    theta = np.block([[c, s], [s.conj(), c.conj()]])
    assert symplectic_defect(theta) <= 1e-13


# -- hyperbolic series ---------------------------------------------------------------

def test_cosh_sinh_identities(rng):
    K = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    K = 0.3 * (K + K.T)
    c, s = cosh_sinh(K)
    assert np.abs(c @ c.conj().T - s @ s.conj().T - np.eye(4)).max() <= 1e-13
    assert np.abs(c @ s - s @ c.conj()).max() <= 1e-13


def test_cosh_sinh_scalar_and_zero():
    c, s = cosh_sinh(np.array([[0.7]]))
    assert c[0, 0] == pytest.approx(np.cosh(0.7), rel=1e-15)
    assert s[0, 0] == pytest.approx(np.sinh(0.7), rel=1e-15)
    c, s = cosh_sinh(SqueezeKernel(Grid1D(3, 0.5), np.zeros((3, 3))))
    np.testing.assert_array_equal(c, np.eye(3))
    np.testing.assert_array_equal(s, np.zeros((3, 3)))


# -- Fock-space action ---------------------------------------------------------------

def test_action_trivial_at_zero_time(rng):
    grid, V, phi, traj = _instance(t=0.1)
    basis = build_basis(2, 8)
    prop = QuadraticFockPropagator(basis, lambda s: build_generator(traj.at(s), V, grid, s), 0, 0, 1e-3)
    pairs, vectors = _probes(grid, basis, rng)
    assert verify_bogoliubov_action(BogoliubovMap(np.eye(4), 0, 0), prop, grid, pairs, vectors) <= 1e-12


def test_action_free_case(rng):
    grid = Grid1D(2, 1.0)
    V = PairPotential.zero(grid)
    phi = normalize(grid, np.array([1.0, 0.5 + 0.3j]))
    gen = lambda s: build_generator(phi, V, grid, s)  # noqa: E731
    th = theta_evolve(lambda s: gen(s).matrix, 0.0, 0.5, 1e-3)
    basis = build_basis(2, 6)
    prop = QuadraticFockPropagator(basis, gen, 0.0, 0.5, 5e-2)
    pairs, vectors = _probes(grid, basis, rng)
    assert verify_bogoliubov_action(th, prop, grid, pairs, vectors) <= 1e-8


def test_action_interacting(rng):
    t = 0.5
    grid, V, phi, traj = _instance(t=t)
    th = theta_evolve(lambda s: build_generator(traj.at(s), V, grid, s).matrix, 0.0, t, 1e-3)
    basis, prop = _fock_side(grid, V, traj, t)
    pairs, vectors = _probes(grid, basis, rng)
    assert verify_bogoliubov_action(th, prop, grid, pairs, vectors) <= 1e-5
    # the opposite sign convention for the doubled generator is inconsistent
    _, wrong = _fock_side(grid, V, traj, t, sign=-1.0)
    assert verify_bogoliubov_action(th, wrong, grid, pairs, vectors) > 0.1


def test_action_interval_mismatch(rng):
    grid, V, phi, traj = _instance(t=0.2)
    basis, prop = _fock_side(grid, V, traj, 0.2, N_max=6)
    with pytest.raises(ValueError):
        verify_bogoliubov_action(BogoliubovMap(np.eye(4), 0, 0.1), prop, grid, [], [])


def test_vacuum_number_matches_pairing_block():
    t = 0.5
    grid, V, phi, traj = _instance(t=t)
    th = theta_evolve(lambda s: build_generator(traj.at(s), V, grid, s).matrix, 0.0, t, 1e-3)
    basis = build_basis(2, 20)
    out = quadratic_fock_evolve(traj.at, V, grid, basis, basis.vacuum(), t, 5e-3)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-10)
    n_fock = number_statistics(basis, out)["expectation"]
    assert n_fock == pytest.approx(np.linalg.norm(th.W) ** 2, rel=1e-5)
    B0 = build_generator(phi, V, grid).B
    small = 1e-2
    out = quadratic_fock_evolve(traj.at, V, grid, basis, basis.vacuum(), small, 1e-3)
    assert number_statistics(basis, out)["expectation"] == pytest.approx(
        np.linalg.norm(B0) ** 2 * small**2, rel=0.05)


def test_fock_evolution_truncation_error():
    grid, V, phi, traj = _instance(strength=5.0, t=0.5)
    basis = build_basis(2, 4)
    with pytest.raises(TruncationError):
        quadratic_fock_evolve(traj.at, V, grid, basis, basis.vacuum(), 0.5, 1e-2)


# -- limiting variance --------------------------------------------------------------

def test_clt_variance_identity_observable_vanishes():
    cfg = ExperimentConfig()
    grid, V, phi = lattice_setup(cfg)
    traj = hartree_evolve(MeanFieldProblem(grid, phi, kernel=V), 0.5, dt=1e-4)
    th = theta_evolve(lambda s: build_generator(traj.at(s), V, grid, s).matrix, 0.0, 0.5, 1e-3)
    assert abs(clt_variance(th, phi, traj.at(0.5), np.eye(4), grid)) <= 1e-8


def test_clt_variance_at_time_zero_is_iid(grid4, rng):
    phi = random_orbital(rng, grid4)
    o = np.array([0.0, 1.0, 2.0, 3.0])
    rho = grid4.h * np.abs(phi) ** 2
    iid = rho @ o**2 - (rho @ o) ** 2
    th = BogoliubovMap(np.eye(8), 0, 0)
    assert clt_variance(th, phi, phi, np.diag(o), grid4) == pytest.approx(iid, abs=1e-13)
    with pytest.raises(ValueError):
        clt_variance(th, phi, phi, np.triu(np.ones((4, 4))), grid4)
