"""Truncated bosonic Fock space over the lattice site modes.

Basis states are occupation vectors ``n = (n_1, ..., n_M)`` with
``sum(n) <= N_max``, ordered by total particle number and then
lexicographically.  Because the order inside a sector is lexicographic the
position of any occupation vector can be computed in closed form
(:meth:`FockBasis.index`), so no hash map is needed.

Mode operators ``a_i`` act on lattice sites with ``[a_i, a_j^+] = delta_ij``.
Smeared operators absorb the grid measure: ``a(f) = sqrt(h) sum conj(f_i) a_i``
so that ``[a(f), a^*(g)] = <f, g>`` with the weighted inner product of
:mod:`bosedyn.lattice`.  Creation maps the top sector to zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import GridMismatchError, TruncationError
from .krylov import DEFAULT as KRYLOV_DEFAULT, KrylovConfig, expm_multiply_hermitian
from .lattice import Grid1D, l2_norm

__all__ = [
    "FockBasis",
    "SqueezeKernel",
    "sector_size",
    "sector_states",
    "sector_annihilation",
    "build_basis",
    "required_cutoff",
    "poisson_tail",
    "apply_ladder",
    "smeared_annihilation",
    "smeared_creation",
    "number_statistics",
    "coherent_state",
    "coherent_sector",
    "product_state",
    "weyl_apply",
    "squeeze_apply",
    "sector_project",
]

MAX_BASIS_SIZE = 5_000_000


def sector_size(M: int, n: int) -> int:
    """Number of occupation vectors of ``M`` modes with total ``n``."""
    return comb(n + M - 1, M - 1) if n >= 0 else 0


@lru_cache(maxsize=256)
def sector_states(M: int, n: int) -> np.ndarray:
    """All occupation vectors with total ``n``, lexicographically ascending."""
    if M == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for first in range(n + 1):
        rest = sector_states(M - 1, n - first)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    out = np.concatenate(blocks)
    out.setflags(write=False)
    return out


def _rank_in_sector(occ: np.ndarray) -> np.ndarray:
    """Lexicographic rank of each row of ``occ`` inside its own sector."""
    occ = np.atleast_2d(occ)
    M = occ.shape[1]
    remaining = occ.sum(axis=1)
    rank = np.zeros(len(occ), dtype=np.int64)
    for i in range(M - 1):
        m = M - i - 1
        ni = occ[:, i]
        # vectors sharing the prefix with a smaller entry at slot i
        rank += _binom(remaining + m, m) - _binom(remaining - ni + m, m)
        remaining = remaining - ni
    return rank


def _binom(n: np.ndarray, k: int) -> np.ndarray:
    n = np.asarray(n, dtype=np.int64)
    out = np.ones_like(n)
    for j in range(k):
        out = out * (n - j) // (j + 1)
    return np.where(n >= k, out, 0)


@lru_cache(maxsize=64)
def sector_annihilation(M: int, n: int, i: int) -> sp.csr_matrix:
    """Matrix of ``a_i`` from sector ``n`` into sector ``n - 1``."""
    if n == 0:
        return sp.csr_matrix((1, 1))[:0]
    src = sector_states(M, n)
    mask = src[:, i] > 0
    cols = np.nonzero(mask)[0]
    tgt = src[mask].copy()
    tgt[:, i] -= 1
    rows = _rank_in_sector(tgt)
    vals = np.sqrt(src[mask, i].astype(float))
    return sp.csr_matrix((vals, (rows, cols)), shape=(sector_size(M, n - 1), len(src)))


class FockBasis:
    """Occupation basis over ``M`` modes with total particle number ``<= N_max``.

    The vacuum has index 0; sector ``n`` occupies the contiguous slice
    :meth:`sector_slice`.
    """

    def __init__(self, M: int, N_max: int, max_size: int = MAX_BASIS_SIZE):
        if M < 1 or N_max < 0:
            raise ValueError(f"need M >= 1 and N_max >= 0, got M={M}, N_max={N_max}")
        self.M = int(M)
        self.N_max = int(N_max)
        size = comb(N_max + M, M)
        if size > max_size:
            raise TruncationError(
                f"Fock basis with M={M}, N_max={N_max} has {size} states (> cap {max_size})")
        self.size = size
        self.offsets = np.array([comb(n + M - 1, M) for n in range(N_max + 2)], dtype=np.int64)

    def __repr__(self):
        return f"FockBasis(M={self.M}, N_max={self.N_max}, size={self.size})"

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, FockBasis) and (self.M, self.N_max) == (other.M, other.N_max)

    def __hash__(self):
        return hash((self.M, self.N_max))

    def sector_slice(self, n: int) -> slice:
        if not 0 <= n <= self.N_max:
            raise ValueError(f"sector {n} outside 0..{self.N_max}")
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))

    @cached_property
    def states(self) -> np.ndarray:
        """``(size, M)`` array of occupation vectors in basis order."""
        return np.concatenate([sector_states(self.M, n) for n in range(self.N_max + 1)])

    @cached_property
    def totals(self) -> np.ndarray:
        return np.repeat(np.arange(self.N_max + 1), np.diff(self.offsets))

    def index(self, occ) -> np.ndarray | int:
        """Basis index of one occupation vector or an array of them."""
        arr = np.asarray(occ, dtype=np.int64)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.M or np.any(arr < 0) or np.any(arr.sum(1) > self.N_max):
            raise ValueError("occupation vector outside the basis")
        idx = self.offsets[arr.sum(1)] + _rank_in_sector(arr)
        return int(idx[0]) if single else idx

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[0] = 1.0
        return v

    def basis_vector(self, occ) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.index(occ)] = 1.0
        return v

    def check(self, psi: np.ndarray) -> None:
        if np.shape(psi) != (self.size,):
            raise GridMismatchError(f"vector of shape {np.shape(psi)} on basis of size {self.size}")

    # -- operators on the full truncated space ------------------------------

    @lru_cache(maxsize=64)
    def annihilation(self, i: int) -> sp.csr_matrix:
        """Sparse matrix of ``a_i`` on the whole truncated space."""
        if not 0 <= i < self.M:
            raise IndexError(f"mode {i} out of range 0..{self.M - 1}")
        rows, cols, vals = [], [], []
        for n in range(1, self.N_max + 1):
            blk = sector_annihilation(self.M, n, i).tocoo()
            rows.append(blk.row + self.offsets[n - 1])
            cols.append(blk.col + self.offsets[n])
            vals.append(blk.data)
        if not rows:
            return sp.csr_matrix((self.size, self.size))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.size, self.size))

    def creation(self, i: int) -> sp.csr_matrix:
        """``a_i^+`` as the adjoint of :meth:`annihilation`; top sector maps to 0."""
        return self.annihilation(i).conj().T.tocsr()

    @cached_property
    def number_diagonal(self) -> np.ndarray:
        return self.totals.astype(float)

    def number_operator(self) -> sp.csr_matrix:
        return sp.diags(self.number_diagonal).tocsr()


def build_basis(M: int, N_max: int, max_size: int = MAX_BASIS_SIZE) -> FockBasis:
    """Construct the graded-lexicographic occupation basis."""
    return FockBasis(M, N_max, max_size)


# -- truncation helpers ------------------------------------------------------

def required_cutoff(mean: float) -> int:
    """Cutoff ``N_max >= mean + 8 sqrt(mean) + 10`` adequate for a coherent mean."""
    return int(np.ceil(mean + 8 * np.sqrt(mean) + 10))


def poisson_tail(mean: float, N_max: int) -> float:
    """Probability that a Poisson(mean) variable exceeds ``N_max``."""
    return float(poisson.sf(N_max, mean)) if mean > 0 else 0.0


# -- ladder operators ----------------------------------------------------------

def apply_ladder(basis: FockBasis, which: str, i: int, psi: np.ndarray) -> np.ndarray:
    """Apply ``a_i`` (``which='annihilate'``) or ``a_i^+`` (``'create'``)."""
    basis.check(psi)
    if which == "annihilate":
        return basis.annihilation(i) @ psi
    if which == "create":
        return basis.creation(i) @ psi
    raise ValueError(f"which must be 'create' or 'annihilate', got {which!r}")


def _mode_weights(grid: Grid1D, f: np.ndarray, basis: FockBasis) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    grid.check(f)
    if basis.M != grid.M:
        raise GridMismatchError(f"basis has {basis.M} modes, grid has {grid.M} sites")
    return np.sqrt(grid.h) * f


def smeared_annihilation(basis: FockBasis, grid: Grid1D, f: np.ndarray) -> sp.csr_matrix:
    """``a(f) = sqrt(h) sum_i conj(f_i) a_i``."""
    w = _mode_weights(grid, f, basis)
    out = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for i in range(basis.M):
        if w[i] != 0:
            out = out + np.conj(w[i]) * basis.annihilation(i)
    return out.tocsr()


def smeared_creation(basis: FockBasis, grid: Grid1D, f: np.ndarray) -> sp.csr_matrix:
    """``a^*(f) = sqrt(h) sum_i f_i a_i^+``, the adjoint of ``a(f)``."""
    return smeared_annihilation(basis, grid, f).conj().T.tocsr()


# -- number statistics ---------------------------------------------------------

def number_statistics(basis: FockBasis, psi: np.ndarray, tol: float = 1e-10) -> dict:
    """Distribution, mean and variance of the particle number in ``psi``.

    Raises ``ValueError`` when ``psi`` is not normalized to within ``tol``.
    """
    basis.check(psi)
    w = np.abs(psi) ** 2
    norm2 = w.sum()
    if abs(norm2 - 1) > tol:
        raise ValueError(f"state not normalized: |psi|^2 = {norm2!r}")
    dist = np.add.reduceat(w, basis.offsets[:-1])
    n = np.arange(basis.N_max + 1)
    mean = float(n @ dist)
    var = float((n - mean) ** 2 @ dist)
    return {"expectation": mean, "variance": var, "distribution": dist}


# -- coherent and product states -----------------------------------------------

def _log_amplitudes(states: np.ndarray, alpha: np.ndarray):
    """``log|prod alpha^n / sqrt(n!)|`` and the phase, per occupation row."""
    mag = np.abs(alpha)
    with np.errstate(divide="ignore"):
        logmag = np.where(mag > 0, np.log(np.where(mag > 0, mag, 1.0)), -np.inf)
    ph = np.angle(alpha)
    n = states.astype(float)
    with np.errstate(invalid="ignore"):
        logs = np.where(n > 0, n * logmag, 0.0).sum(1) - 0.5 * gammaln(n + 1).sum(1)
    phase = n @ ph
    return logs, phase


def coherent_sector(grid: Grid1D, phi: np.ndarray, n: int) -> np.ndarray:
    """Sector-``n`` block of ``W(phi) Omega`` (unnormalized, exact amplitudes)."""
    alpha = np.sqrt(grid.h) * np.asarray(phi, dtype=complex)
    states = sector_states(grid.M, n)
    logs, phase = _log_amplitudes(states, alpha)
    lam = float(np.sum(np.abs(alpha) ** 2))
    return np.exp(logs - lam / 2) * np.exp(1j * phase)


def coherent_state(basis: FockBasis, grid: Grid1D, phi: np.ndarray,
                   tail_tol: float = 1e-12) -> np.ndarray:
    """Truncated coherent state ``W(phi) Omega`` from its explicit expansion.

    The amplitudes are exact; the state is not renormalized, so
    ``1 - |psi|^2`` equals the Poisson tail beyond ``N_max``.  Raises
    :class:`TruncationError` when that tail exceeds ``tail_tol``.
    """
    _mode_weights(grid, phi, basis)
    lam = l2_norm(grid, phi) ** 2
    tail = poisson_tail(lam, basis.N_max)
    if tail > tail_tol:
        raise TruncationError(
            f"N_max={basis.N_max} too small for coherent mean {lam:.4g}: tail {tail:.2e}"
            f" > {tail_tol:.0e} (rule suggests N_max >= {required_cutoff(lam)})")
    return np.concatenate([coherent_sector(grid, phi, n) for n in range(basis.N_max + 1)])


def product_sector(grid: Grid1D, phi: np.ndarray, n: int) -> np.ndarray:
    """Normalized ``phi^{(x) n}`` in the occupation basis of sector ``n``."""
    phi = np.asarray(phi, dtype=complex)
    nrm = l2_norm(grid, phi)
    if nrm == 0:
        raise ValueError("product state of the zero orbital")
    amp = coherent_sector(grid, phi / nrm, n)
    # coherent amplitudes carry exp(-1/2) / sqrt(n!) relative to the product state
    return amp * np.exp(0.5 + 0.5 * gammaln(n + 1))


def product_state(basis: FockBasis, grid: Grid1D, phi: np.ndarray, n: int) -> np.ndarray:
    """Sector-pure factorized state ``phi^{(x) n}`` embedded in ``basis``."""
    out = np.zeros(basis.size, dtype=complex)
    out[basis.sector_slice(n)] = product_sector(grid, phi, n)
    return out


# -- Weyl and squeeze operators ------------------------------------------------

def _apply_antihermitian_exp(G: sp.spmatrix, psi: np.ndarray, config: KrylovConfig) -> np.ndarray:
    # exp(G) = exp(-i H') with H' = i G Hermitian
    Hp = (1j * G).tocsr()
    return expm_multiply_hermitian(Hp, psi, 1.0, config)


def weyl_apply(basis: FockBasis, grid: Grid1D, phi: np.ndarray, psi: np.ndarray,
               norm_tol: float = 1e-8, config: KrylovConfig = KRYLOV_DEFAULT) -> np.ndarray:
    """Apply ``W(phi) = exp(a^*(phi) - a(phi))`` on the truncated space.

    Raises :class:`TruncationError` if the norm changes by more than
    ``norm_tol`` or the relative weight reaching the top sector exceeds it.
    """
    basis.check(psi)
    a_phi = smeared_annihilation(basis, grid, phi)
    G = a_phi.conj().T - a_phi
    out = _apply_antihermitian_exp(G, psi, config)
    _check_leak(basis, psi, out, norm_tol, 1, "Weyl operator")
    return out


def _check_leak(basis: FockBasis, before, after, norm_tol, depth, what):
    # the truncated generator is exactly anti-Hermitian, so the norm alone
    # cannot detect the cutoff; weight in the top ``depth`` sectors does
    n0 = np.linalg.norm(before)
    defect = abs(np.linalg.norm(after) - n0)
    lo = basis.sector_slice(max(basis.N_max - depth + 1, 0)).start
    top = float(np.linalg.norm(after[lo:]) ** 2) / max(n0**2, 1e-300)
    if defect > norm_tol or top > norm_tol:
        raise TruncationError(f"{what}: norm defect {defect:.2e}, top-sector weight {top:.2e} "
                              f"at N_max={basis.N_max}")


@dataclass(frozen=True)
class SqueezeKernel:
    """Symmetric two-point kernel ``k(x, y)`` sampled on a lattice.

    As an integral operator it acts by ``(k f)(x) = h sum_y k(x, y) f(y)``,
    so its matrix in the orthonormal site basis is :attr:`operator` ``= h k``.
    """

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.values, dtype=complex)
        if k.shape != (self.grid.M, self.grid.M):
            raise GridMismatchError(f"kernel of shape {k.shape} on grid with M={self.grid.M}")
        if not np.allclose(k, k.T, atol=1e-13 * (1 + np.abs(k).max())):
            raise ValueError("squeeze kernel must be symmetric")
        object.__setattr__(self, "values", 0.5 * (k + k.T))

    @property
    def operator(self) -> np.ndarray:
        return self.grid.h * self.values

    @property
    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.operator))


def squeeze_generator(basis: FockBasis, kernel: SqueezeKernel) -> sp.csr_matrix:
    """``sum_xy h^2 (k a_x^* a_y^* - conj(k) a_x a_y)`` in site-mode operators.

    With continuum-normalized ``a_x = a_i / sqrt(h)`` the lattice form is
    ``sum_ij K_ij a_i^+ a_j^+ - h.c.`` where ``K = h k``.
    """
    if basis.M != kernel.grid.M:
        raise GridMismatchError("kernel and basis disagree on the number of modes")
    K = kernel.operator
    pair = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for i in range(basis.M):
        for j in range(basis.M):
            if K[i, j] != 0:
                pair = pair + K[i, j] * (basis.creation(i) @ basis.creation(j))
    return (pair - pair.conj().T).tocsr()


def squeeze_apply(basis: FockBasis, kernel: SqueezeKernel, psi: np.ndarray,
                  norm_tol: float = 1e-8, config: KrylovConfig = KRYLOV_DEFAULT) -> np.ndarray:
    """Apply ``T = exp(sum_xy h^2 (k a_x^* a_y^* - conj(k) a_x a_y))``.

    For a single mode with ``k = r`` on spacing ``h`` this is the standard
    squeeze with parameter ``2 h r``, i.e. ``<N> = sinh(2 h r)^2`` on the
    squeezed vacuum.  Correspondingly ``T^* a(f) T = a(cosh f) + a^*(sinh conj(f))``
    with the hyperbolic functions of the operator ``2 h k``.
    """
    basis.check(psi)
    out = _apply_antihermitian_exp(squeeze_generator(basis, kernel), psi, config)
    _check_leak(basis, psi, out, norm_tol, 2, "squeeze operator")
    return out


def sector_project(basis: FockBasis, n: int, psi: np.ndarray) -> np.ndarray:
    """Zero every amplitude outside sector ``n`` (no renormalization)."""
    basis.check(psi)
    out = np.zeros_like(psi)
    sl = basis.sector_slice(n)
    out[sl] = psi[sl]
    return out
