"""Exact many-body dynamics on the truncated Fock space.

The second-quantized Hamiltonian on the lattice reads

    H = sum_ij K_ij a_i^+ a_j + sum_i w_i n_i
        + (lam / 2) sum_xy v(x - y) a_x^+ a_y^+ a_y a_x

with ``K = -Delta_h`` and ``lam = 1/N`` in the mean-field scaling.  It
conserves particle number, so everything here can be done one sector at a
time; :func:`coherent_sector_run` exploits that to handle coherent states
whose full truncated basis would not fit in memory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import GridMismatchError, TruncationError
from .fock import (
    FockBasis,
    coherent_sector,
    poisson_tail,
    required_cutoff,
    sector_annihilation,
    sector_states,
    _rank_in_sector,
    build_basis,
    product_state,
    number_statistics,
    weyl_apply,
)
from .krylov import DEFAULT as KRYLOV_DEFAULT, KrylovConfig, expm_multiply_hermitian
from .lattice import Grid1D, PairPotential, l2_norm, laplacian_matrix

__all__ = [
    "ManyBodyHamiltonian",
    "ReducedDensity",
    "sector_hamiltonian",
    "assemble_hamiltonian",
    "propagate",
    "propagate_trajectory",
    "reduced_density",
    "sector_reduced_density",
    "projector",
    "trace_norm_distance",
    "bbgky_rhs",
    "bbgky_residual",
    "bbgky_check",
    "fluctuation_number_growth",
    "coherent_sector_run",
]


def _hop(M: int, n: int, i: int, j: int) -> sp.csr_matrix:
    """``a_i^+ a_j`` on sector ``n`` for ``i != j``."""
    states = sector_states(M, n)
    has = states[:, j] > 0
    cols = np.nonzero(has)[0]
    tgt = states[has].copy()
    vals = np.sqrt(tgt[:, j] * (tgt[:, i] + 1.0))
    tgt[:, j] -= 1
    tgt[:, i] += 1
    size = len(states)
    return sp.csr_matrix((vals, (_rank_in_sector(tgt), cols)), shape=(size, size))


def sector_hamiltonian(grid: Grid1D, V: PairPotential, V_ext: np.ndarray | None,
                       n: int, coupling: float) -> sp.csr_matrix:
    """Restriction of the Fock Hamiltonian to the ``n``-particle sector."""
    M = grid.M
    if V.grid != grid:
        raise GridMismatchError("potential and grid disagree")
    K = laplacian_matrix(grid)
    w = np.zeros(M) if V_ext is None else np.asarray(V_ext, dtype=float)
    grid.check(w)
    states = sector_states(M, n).astype(float)
    Vmat = V.matrix()
    diag = states @ (np.diag(K) + w)
    # n_x n_y v(x-y) over all pairs, minus the self-interaction n_x v(0)
    diag = diag + 0.5 * coupling * (np.einsum("si,ij,sj->s", states, Vmat, states)
                                     - states @ np.diag(Vmat))
    H = sp.diags(diag).tocsr()
    for i in range(M):
        for j in range(M):
            if i != j and K[i, j] != 0 and n > 0:
                H = H + K[i, j] * _hop(M, n, i, j)
    return H.tocsr()


@dataclass
class ManyBodyHamiltonian:
    """Sparse Hermitian Fock Hamiltonian together with how it was built."""

    matrix: sp.csr_matrix
    basis: FockBasis
    provenance: dict = field(default_factory=dict)

    def sector_block(self, n: int) -> sp.csr_matrix:
        sl = self.basis.sector_slice(n)
        return self.matrix[sl, sl]

    def energy(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.matrix @ psi).real)


def assemble_hamiltonian(grid: Grid1D, V: PairPotential, V_ext: np.ndarray | None,
                         N: int, basis: FockBasis,
                         coupling: float | None = None) -> ManyBodyHamiltonian:
    """Fock Hamiltonian with interaction ``1/(2N) sum v a^+ a^+ a a``.

    ``coupling`` overrides the default mean-field prefactor ``1/N``.
    """
    if basis.M != grid.M:
        raise GridMismatchError(f"basis has {basis.M} modes, grid has {grid.M} sites")
    lam = 1.0 / N if coupling is None else coupling
    blocks = [sector_hamiltonian(grid, V, V_ext, n, lam) for n in range(basis.N_max + 1)]
    H = sp.block_diag(blocks, format="csr")
    prov = {"M": grid.M, "h": grid.h, "potential": V.label, "N": N, "coupling": lam,
            "external": V_ext is not None}
    return ManyBodyHamiltonian(H, basis, prov)


def propagate(H: ManyBodyHamiltonian | sp.spmatrix, psi: np.ndarray, t: float, dt: float,
              config: KrylovConfig = KRYLOV_DEFAULT) -> np.ndarray:
    """``exp(-i H t) psi`` by Krylov steps of length at most ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    mat = H.matrix if isinstance(H, ManyBodyHamiltonian) else H
    out = np.asarray(psi, dtype=complex)
    if out.shape != (mat.shape[0],):
        raise GridMismatchError("state and Hamiltonian dimensions differ")
    nsteps = int(np.ceil(abs(t) / dt - 1e-12))
    for _ in range(nsteps):
        out = expm_multiply_hermitian(mat, out, t / nsteps, config)
    return out


def propagate_trajectory(H, psi: np.ndarray, times, config: KrylovConfig = KRYLOV_DEFAULT):
    """States at each of the increasing ``times`` (starting from ``t = 0``)."""
    mat = H.matrix if isinstance(H, ManyBodyHamiltonian) else H
    out, cur, t_prev = [], np.asarray(psi, dtype=complex), 0.0
    for t in times:
        cur = expm_multiply_hermitian(mat, cur, t - t_prev, config)
        out.append(cur)
        t_prev = t
    return out


# -- reduced densities -----------------------------------------------------------

@dataclass(frozen=True)
class ReducedDensity:
    """Trace-one ``k``-particle density in the orthonormal site basis.

    ``matrix[(x1..xk), (y1..yk)]`` is the kernel ``gamma(x; y)`` with
    multi-indices flattened row-major.
    """

    matrix: np.ndarray
    k: int

    @property
    def M(self) -> int:
        return int(round(self.matrix.shape[0] ** (1 / self.k)))

    def partial_trace(self) -> "ReducedDensity":
        """Trace out the last particle slot."""
        M, k = self.M, self.k
        if k < 2:
            raise ValueError("nothing to trace out")
        g = self.matrix.reshape((M ** (k - 1), M, M ** (k - 1), M))
        return ReducedDensity(np.einsum("azbz->ab", g), k - 1)


def projector(grid: Grid1D, phi: np.ndarray, k: int = 1) -> ReducedDensity:
    """``|phi><phi|^{(x) k}`` in the orthonormal site basis (``phi`` normalized)."""
    v = np.sqrt(grid.h) * np.asarray(phi, dtype=complex)
    P = np.outer(v, v.conj())
    out = P
    for _ in range(k - 1):
        out = np.kron(out, P)
    return ReducedDensity(out, k)


def _correlations(M: int, sectors: dict, k: int):
    """Unnormalized ``<a^+_y.. a_x..>`` summed over sector blocks ``{n: vec}``."""
    C = np.zeros((M**k, M**k), dtype=complex)
    weight = 0.0
    for n, vec in sectors.items():
        if n < k:
            continue
        ff = np.prod([n - j for j in range(k)])
        weight += ff * np.vdot(vec, vec).real
        if k == 1:
            U = np.array([sector_annihilation(M, n, x) @ vec for x in range(M)])
        else:
            first = [sector_annihilation(M, n, x) @ vec for x in range(M)]
            U = np.array([sector_annihilation(M, n - 1, x2) @ first[x1]
                          for x1 in range(M) for x2 in range(M)])
        C += U.conj() @ U.T
    # C[y, x] = <a_y v, a_x v>; the kernel gamma(x; y) is its transpose
    return C.T, weight


def _split_sectors(basis: FockBasis, psi: np.ndarray) -> dict:
    return {n: psi[basis.sector_slice(n)] for n in range(basis.N_max + 1)
            if np.any(psi[basis.sector_slice(n)])}


def reduced_density(basis: FockBasis, psi: np.ndarray, k: int = 1, k_max: int = 2) -> ReducedDensity:
    """``k``-particle density of a Fock vector.

    Normalized by the falling factorial ``<N (N-1) .. (N-k+1)>`` so the trace
    is one; for ``k = 1`` this is ``<a_y^+ a_x> / <N>``.
    """
    basis.check(psi)
    if not 1 <= k <= k_max:
        raise ValueError(f"k={k} outside 1..{k_max}")
    return sector_reduced_density(basis.M, _split_sectors(basis, psi), k)


def sector_reduced_density(M: int, sectors: dict, k: int = 1) -> ReducedDensity:
    """Same as :func:`reduced_density` for a state given as ``{n: block}``."""
    C, weight = _correlations(M, sectors, k)
    if weight <= 0:
        raise ValueError("reduced density undefined: state has fewer than k particles")
    return ReducedDensity(C / weight, k)


def trace_norm_distance(A: ReducedDensity | np.ndarray, B: ReducedDensity | np.ndarray) -> float:
    """Sum of absolute eigenvalues of the Hermitian difference."""
    a = A.matrix if isinstance(A, ReducedDensity) else np.asarray(A)
    b = B.matrix if isinstance(B, ReducedDensity) else np.asarray(B)
    if a.shape != b.shape:
        raise GridMismatchError(f"density shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


# -- BBGKY ---------------------------------------------------------------------

def bbgky_rhs(grid: Grid1D, V: PairPotential, V_ext, g1: ReducedDensity, g2: ReducedDensity,
              N: int, coupling: float | None = None) -> np.ndarray:
    """Right side of the first hierarchy equation on the lattice.

    ``[K + w, g1] + (N-1) lam sum_z (v(x-z) - v(y-z)) g2(x,z; y,z)``.
    """
    M = grid.M
    lam = 1.0 / N if coupling is None else coupling
    h1 = laplacian_matrix(grid) + np.diag(np.zeros(M) if V_ext is None else V_ext)
    G1 = g1.matrix
    G2 = g2.matrix.reshape(M, M, M, M)
    Vm = V.matrix()
    # collision[x, y] = sum_z (v(x-z) - v(y-z)) g2(x,z; y,z)
    diag2 = np.einsum("xzyz->xzy", G2)
    coll = np.einsum("xz,xzy->xy", Vm, diag2) - np.einsum("yz,xzy->xy", Vm, diag2)
    return h1 @ G1 - G1 @ h1 + (N - 1) * lam * coll


def _check_sector_pure(basis: FockBasis, psi: np.ndarray, N: int) -> None:
    sl = basis.sector_slice(N)
    outside = np.linalg.norm(psi) ** 2 - np.linalg.norm(psi[sl]) ** 2
    if outside > 1e-12:
        raise ValueError(f"state is not supported in the {N}-particle sector")


def bbgky_residual(basis: FockBasis, trajectory, dt: float, grid: Grid1D, V: PairPotential,
                   V_ext=None, N: int | None = None, coupling: float | None = None) -> float:
    """Frobenius residual of the first BBGKY equation at the middle of three states.

    ``trajectory`` holds sector-pure ``N``-particle states at ``t - dt, t, t + dt``;
    the time derivative is the centered difference, so the residual is O(dt^2).
    """
    prev, mid, nxt = trajectory
    if N is None:
        N = int(round(number_statistics(basis, mid / np.linalg.norm(mid))["expectation"]))
    for s in (prev, mid, nxt):
        _check_sector_pure(basis, s, N)
    g_prev = reduced_density(basis, prev, 1).matrix
    g_next = reduced_density(basis, nxt, 1).matrix
    g1 = reduced_density(basis, mid, 1)
    g2 = reduced_density(basis, mid, 2)
    lhs = 1j * (g_next - g_prev) / (2 * dt)
    return float(np.linalg.norm(lhs - bbgky_rhs(grid, V, V_ext, g1, g2, N, coupling)))


def bbgky_check(grid: Grid1D, V: PairPotential, V_ext, N: int, phi: np.ndarray,
                t: float, dt: float, coupling: float | None = None) -> dict:
    """BBGKY residual at ``dt`` and ``dt/2`` with a dense-eigensolve trajectory.

    The reference scale ``(4/3) |r(dt) - r(dt/2)|`` is the Richardson estimate
    of the O(dt^2) part of ``r(dt)``; a structurally correct hierarchy gives
    ``r(dt) / reference ~ 1`` and ``r(dt) / r(dt/2) ~ 4``.
    """
    basis = build_basis(grid.M, N)
    H = assemble_hamiltonian(grid, V, V_ext, N, basis, coupling)
    dense = H.sector_block(N).toarray()
    evals, evecs = np.linalg.eigh(dense)
    sl = basis.sector_slice(N)
    psi0 = product_state(basis, grid, phi, N)

    def state(s):
        out = np.zeros(basis.size, dtype=complex)
        out[sl] = evecs @ (np.exp(-1j * evals * s) * (evecs.conj().T @ psi0[sl]))
        return out

    res = []
    for step in (dt, dt / 2):
        traj = [state(t - step), state(t), state(t + step)]
        res.append(bbgky_residual(basis, traj, step, grid, V, V_ext, N, coupling))
    ref = 4.0 / 3.0 * abs(res[0] - res[1])
    return {"residual": res[0], "residual_half": res[1], "reference_scale": ref,
            "ratio": res[0] / res[1] if res[1] > 0 else np.inf, "dt": dt}


# -- fluctuation dynamics ------------------------------------------------------------

def fluctuation_number_growth(grid: Grid1D, V: PairPotential, V_ext, N: int, phi: np.ndarray,
                              times, phi_traj, basis: FockBasis | None = None,
                              config: KrylovConfig = KRYLOV_DEFAULT) -> np.ndarray:
    """``<Omega, U_N^*(t;0) N U_N(t;0) Omega>`` on ``times`` by composition.

    ``U_N(t;0) = W^*(sqrt(N) phi_t) exp(-i H t) W(sqrt(N) phi)``; ``phi_traj[i]``
    is the lattice Hartree solution at ``times[i]``.  The full truncated basis
    is used, so this is limited to small ``N``; :func:`coherent_sector_run`
    computes the same numbers sector by sector.  The default cutoff only
    covers the initial state; when the fluctuation vector spreads further,
    :class:`TruncationError` is raised and a larger ``basis`` is needed.
    """
    if basis is None:
        basis = build_basis(grid.M, required_cutoff(N))
    H = assemble_hamiltonian(grid, V, V_ext, N, basis)
    psi0 = weyl_apply(basis, grid, np.sqrt(N) * np.asarray(phi), basis.vacuum(), config=config)
    states = propagate_trajectory(H, psi0, times, config)
    out = []
    for psi_t, phi_t in zip(states, phi_traj):
        xi = weyl_apply(basis, grid, -np.sqrt(N) * np.asarray(phi_t), psi_t, config=config)
        stats = number_statistics(basis, xi / np.linalg.norm(xi))
        out.append(stats["expectation"])
    return np.array(out)


def coherent_sector_run(grid: Grid1D, V: PairPotential, V_ext, N: int, phi: np.ndarray,
                        times, phi_traj=None, k_max: int = 1, weight_cut: float = 1e-16,
                        N_max: int | None = None,
                        config: KrylovConfig = KRYLOV_DEFAULT) -> dict:
    """Evolve ``W(sqrt(N) phi) Omega`` exactly, one particle-number sector at a time.

    Returns per output time the reduced densities ``Gamma^(k)`` for
    ``k <= k_max`` and, when ``phi_traj`` is given, the fluctuation number
    ``sum_x ||(a_x - sqrt(N h) phi_t(x)) Psi_t||^2``, which equals
    ``<W(sqrt(N) phi_t) N W^*(sqrt(N) phi_t)>`` exactly.  Sectors whose Poisson
    weight is below ``weight_cut`` are skipped and their mass is reported.
    """
    phi = np.asarray(phi, dtype=complex)
    times = np.asarray(times, dtype=float)
    M = grid.M
    lam = float(N) * l2_norm(grid, phi) ** 2
    if N_max is None:
        N_max = required_cutoff(lam)
    tail = poisson_tail(lam, N_max)
    if tail > 1e-12:
        raise TruncationError(f"N_max={N_max} too small for coherent mean {lam}")
    pmf = poisson.pmf(np.arange(N_max + 1), lam)
    keep = [n for n in range(N_max + 1) if pmf[n] >= weight_cut]
    dropped = float(1 - pmf[keep].sum())
    T = len(times)
    C = {k: np.zeros((T, M**k, M**k), dtype=complex) for k in range(1, k_max + 1)}
    W = {k: np.zeros(T) for k in range(1, k_max + 1)}
    mean_a = np.zeros((T, M), dtype=complex)
    norm2 = np.zeros(T)
    num = np.zeros(T)
    prev_n, prev_traj = None, None
    for n in keep:
        H = sector_hamiltonian(grid, V, V_ext, n, 1.0 / N)
        v = coherent_sector(grid, np.sqrt(N) * phi, n)
        traj = []
        t_prev = 0.0
        for ti, t in enumerate(times):
            v = expm_multiply_hermitian(H, v, t - t_prev, config)
            t_prev = t
            traj.append(v)
            nv = np.vdot(v, v).real
            norm2[ti] += nv
            num[ti] += n * nv
            for k in C:
                if n >= k:
                    Ck, wk = _correlations(M, {n: v}, k)
                    C[k][ti] += Ck
                    W[k][ti] += wk
            if phi_traj is not None and prev_n == n - 1:
                for x in range(M):
                    mean_a[ti, x] += np.vdot(prev_traj[ti], sector_annihilation(M, n, x) @ v)
        prev_n, prev_traj = n, traj
    out = {"times": times, "sectors": (keep[0], keep[-1]), "dropped_mass": dropped,
           "N_max": N_max, "norm2": norm2, "mean_number": num}
    for k in C:
        out[f"gamma{k}"] = [ReducedDensity(C[k][ti] / W[k][ti], k) for ti in range(T)]
    if phi_traj is not None:
        alpha = np.sqrt(N * grid.h) * np.asarray(phi_traj, dtype=complex)
        out["fluct_number"] = (num - 2 * np.einsum("tx,tx->t", alpha.conj(), mean_a).real
                               + np.sum(np.abs(alpha) ** 2, axis=1) * norm2)
    return out
