import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from bosedyn.bogoliubov import cosh_sinh
from bosedyn.errors import TruncationError
from bosedyn.fock import (
    SqueezeKernel,
    build_basis,
    coherent_state,
    number_statistics,
    poisson_tail,
    product_state,
    required_cutoff,
    sector_project,
    sector_size,
    sector_states,
    smeared_annihilation,
    smeared_creation,
    squeeze_apply,
    weyl_apply,
)
from bosedyn.lattice import Grid1D, l2_inner, l2_norm, normalize

from conftest import random_orbital


# -- basis ---------------------------------------------------------------------

def test_basis_size_and_ordering():
    b = build_basis(3, 6)
    assert b.size == math.comb(6 + 3, 3)
    assert sum(sector_size(3, n) for n in range(7)) == b.size
    np.testing.assert_array_equal(b.totals, np.repeat(np.arange(7), [sector_size(3, n) for n in range(7)]))
    np.testing.assert_array_equal(b.index(b.states), np.arange(b.size))
    s = sector_states(3, 4)
    assert all(tuple(a) < tuple(c) for a, c in zip(s, s[1:]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=4, max_size=4))
def test_index_roundtrip(occ):
    b = build_basis(4, 20)
    i = b.index(np.array(occ))
    np.testing.assert_array_equal(b.states[i], occ)


def test_basis_size_cap():
    with pytest.raises(TruncationError):
        build_basis(8, 40, max_size=1000)


# -- canonical commutation relations and ladder bounds ---------------------------

def test_mode_ccr_on_interior_sectors():
    b = build_basis(3, 7)
    interior = b.totals < b.N_max
    for i in range(3):
        for j in range(3):
            ai, aj = b.annihilation(i), b.annihilation(j)
            cij = (ai @ b.creation(j) - b.creation(j) @ ai).toarray()
            target = np.eye(b.size) if i == j else np.zeros((b.size, b.size))
            assert np.abs((cij - target)[np.ix_(interior, interior)]).max() <= 1e-12
            assert abs(ai @ aj - aj @ ai).max() <= 1e-12


def test_creation_kills_top_sector():
    b = build_basis(2, 4)
    top = b.basis_vector([1, 3])
    assert np.all(b.creation(0) @ top == 0)


def test_smeared_ccr(rng):
    g = Grid1D(3, 0.4)
    b = build_basis(3, 6)
    f, h = random_orbital(rng, g, False), random_orbital(rng, g, False)
    a, ad = smeared_annihilation(b, g, f), smeared_creation(b, g, h)
    comm = (a @ ad - ad @ a).toarray()
    interior = b.totals < b.N_max
    target = l2_inner(g, f, h) * np.eye(b.size)
    assert np.abs((comm - target)[np.ix_(interior, interior)]).max() <= 1e-12


def test_ladder_bounds_random(rng):
    g = Grid1D(3, 0.5)
    b = build_basis(3, 8)
    n = b.number_diagonal
    for _ in range(50):
        f = random_orbital(rng, g, False)
        psi = rng.normal(size=b.size) + 1j * rng.normal(size=b.size)
        psi[b.totals == b.N_max] = 0
        nf = l2_norm(g, f)
        assert np.linalg.norm(smeared_annihilation(b, g, f) @ psi) <= nf * np.linalg.norm(np.sqrt(n) * psi) * (1 + 1e-12)
        assert np.linalg.norm(smeared_creation(b, g, f) @ psi) <= nf * np.linalg.norm(np.sqrt(n + 1) * psi) * (1 + 1e-12)


# -- coherent states and Weyl operators ----------------------------------------

def test_cutoff_rule():
    assert required_cutoff(9) == 43
    assert poisson_tail(9, 43) == pytest.approx(poisson.sf(43, 9), rel=1e-6, abs=1e-300)


def test_coherent_vacuum():
    g = Grid1D(2, 1.0)
    b = build_basis(2, 5)
    np.testing.assert_allclose(coherent_state(b, g, np.zeros(2)), b.vacuum())


def test_coherent_poisson_statistics():
    g = Grid1D(2, 0.5)
    b = build_basis(2, required_cutoff(9))
    phi = 3 * normalize(g, np.array([1.0, 0.4 + 0.7j]))
    psi = coherent_state(b, g, phi)
    stats = number_statistics(b, psi)
    assert stats["expectation"] == pytest.approx(9.0, abs=1e-8)
    tv = 0.5 * np.abs(stats["distribution"] - poisson.pmf(np.arange(b.N_max + 1), 9)).sum()
    assert tv <= 10 * max(poisson_tail(9, b.N_max), 1e-15)


def test_coherent_eigenvector(rng):
    g = Grid1D(2, 0.8)
    b = build_basis(2, 40)
    phi = 1.5 * random_orbital(rng, g)
    f = random_orbital(rng, g, False)
    psi = coherent_state(b, g, phi)
    lhs = smeared_annihilation(b, g, f) @ psi
    assert np.linalg.norm(lhs - l2_inner(g, f, phi) * psi) <= 1e-8


def test_coherent_truncation_error():
    g = Grid1D(2, 1.0)
    with pytest.raises(TruncationError):
        coherent_state(build_basis(2, 5), g, np.array([3.0, 0.0]))


def test_weyl_matches_coherent_and_inverse(rng):
    g = Grid1D(2, 1.0)
    b = build_basis(2, 35)
    phi = 1.4 * random_orbital(rng, g)
    w = weyl_apply(b, g, phi, b.vacuum())
    assert np.linalg.norm(w - coherent_state(b, g, phi)) <= 1e-8
    psi = b.basis_vector([1, 2])
    back = weyl_apply(b, g, -phi, weyl_apply(b, g, phi, psi))
    assert np.linalg.norm(back - psi) <= 1e-8


def test_weyl_conjugation(rng):
    g = Grid1D(2, 1.0)
    b = build_basis(2, 40)
    phi, f = 1.2 * random_orbital(rng, g), random_orbital(rng, g, False)
    psi = b.basis_vector([1, 1])
    a = smeared_annihilation(b, g, f)
    lhs = weyl_apply(b, g, -phi, a @ weyl_apply(b, g, phi, psi))
    rhs = a @ psi + l2_inner(g, f, phi) * psi
    assert np.linalg.norm(lhs - rhs) <= 1e-8


def test_weyl_group_law_collinear(rng):
    g = Grid1D(2, 1.0)
    b = build_basis(2, 40)
    phi = random_orbital(rng, g)
    psi = b.basis_vector([0, 1])
    two = weyl_apply(b, g, 0.7 * phi, weyl_apply(b, g, 0.5 * phi, psi))
    assert np.linalg.norm(two - weyl_apply(b, g, 1.2 * phi, psi)) <= 1e-8


def test_weyl_truncation_error():
    g = Grid1D(2, 1.0)
    b = build_basis(2, 6)
    with pytest.raises(TruncationError):
        weyl_apply(b, g, np.array([3.0, 0.0]), b.vacuum())


# -- squeeze operator --------------------------------------------------------------

def test_squeeze_zero_is_identity(rng):
    g = Grid1D(2, 1.0)
    b = build_basis(2, 6)
    psi = rng.normal(size=b.size) + 0j
    psi[b.totals >= b.N_max - 1] = 0
    out = squeeze_apply(b, SqueezeKernel(g, np.zeros((2, 2))), psi)
    np.testing.assert_allclose(out, psi, atol=1e-14)


@pytest.mark.parametrize("h,r", [(1.0, 0.3), (0.5, 0.4), (0.25, -0.8)])
def test_single_mode_squeezed_vacuum(h, r):
    g = Grid1D(1, h)
    b = build_basis(1, 80)
    out = squeeze_apply(b, SqueezeKernel(g, np.array([[r]])), b.vacuum())
    assert number_statistics(b, out)["expectation"] == pytest.approx(np.sinh(2 * h * r) ** 2, rel=1e-9)


def test_squeeze_conjugation(rng):
    g = Grid1D(2, 0.5)
    b = build_basis(2, 60)
    k = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    k = 0.05 * (k + k.T)
    ker = SqueezeKernel(g, k)
    ch, sh = cosh_sinh(2 * ker.operator)
    f = random_orbital(rng, g, False)
    psi = b.basis_vector([1, 0])
    a = smeared_annihilation(b, g, f)
    lhs = squeeze_apply(b, SqueezeKernel(g, -k), a @ squeeze_apply(b, ker, psi))
    rhs = (smeared_annihilation(b, g, ch @ f) + smeared_creation(b, g, sh @ f.conj())) @ psi
    assert np.linalg.norm(lhs - rhs) <= 1e-6


def test_squeeze_kernel_validation():
    g = Grid1D(2, 1.0)
    with pytest.raises(ValueError):
        SqueezeKernel(g, np.array([[0.0, 1.0], [0.0, 0.0]]))


# -- sector projection and number statistics -------------------------------------

def test_sector_projection(rng):
    g = Grid1D(3, 1.0)
    b = build_basis(3, 30)
    phi = normalize(g, np.array([1.0, 0.5j, 0.2]))
    psi = coherent_state(b, g, 2.0 * phi)
    total = sum(np.linalg.norm(sector_project(b, n, psi)) ** 2 for n in range(b.N_max + 1))
    assert total == pytest.approx(np.linalg.norm(psi) ** 2, rel=1e-14)
    p4 = sector_project(b, 4, psi)
    np.testing.assert_allclose(p4 / np.linalg.norm(p4), product_state(b, g, phi, 4), atol=1e-12)
    pure = product_state(b, g, phi, 4)
    np.testing.assert_array_equal(sector_project(b, 4, pure), pure)


def test_number_statistics_requires_normalization():
    b = build_basis(2, 3)
    with pytest.raises(ValueError):
        number_statistics(b, 2 * b.vacuum())
