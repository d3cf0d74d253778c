"""Limiting quadratic fluctuation dynamics and its Bogoliubov-map representation.

Doubled one-body vectors ``(f, g)`` act on Fock space through the field
``A(f, g) = a(f) + a^*(conj(g))``.  The quadratic generator

    L(t) = sum_ij D_ij a_i^+ a_j + 1/2 sum_ij (conj(B_ij) a_i^+ a_j^+ + B_ij a_i a_j)

satisfies ``[L, A(f, g)] = A(M (f, g))`` with

    M = [[-D, conj(B)], [-B, conj(D)]],

so the Heisenberg-picture fields obey ``U^* A(F) U = A(theta F)`` where
``i d/dt theta(t; s) = theta(t; s) M(t)``.  All matrices are operator
matrices on lattice values; they coincide with the matrices in the
orthonormal site basis, so only inner products carry the weight ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, StabilityError, TruncationError
from .fock import FockBasis, SqueezeKernel, smeared_annihilation, smeared_creation
from .krylov import DEFAULT as KRYLOV_DEFAULT
from .krylov import KrylovConfig, expm_multiply_hermitian
from .lattice import Grid1D, PairPotential, laplacian_matrix

__all__ = [
    "QuadraticGenerator",
    "BogoliubovMap",
    "build_generator",
    "symplectic_defect",
    "theta_evolve",
    "cosh_sinh",
    "QuadraticFockPropagator",
    "quadratic_fock_evolve",
    "field_operator",
    "verify_bogoliubov_action",
    "clt_variance",
]

OrbitalPath = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class QuadraticGenerator:
    """One-body block ``D`` (Hermitian) and pairing block ``B`` (symmetric) at time ``t``."""

    D: np.ndarray
    B: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        D, B = np.asarray(self.D, complex), np.asarray(self.B, complex)
        scale = 1.0 + max(np.abs(D).max(initial=0), np.abs(B).max(initial=0))
        if np.abs(D - D.conj().T).max(initial=0) > 1e-12 * scale:
            raise ValueError("D must be Hermitian")
        if np.abs(B - B.T).max(initial=0) > 1e-12 * scale:
            raise ValueError("B must be symmetric")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "B", B)

    @property
    def M(self) -> int:
        return self.D.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Doubled generator ``[[-D, conj(B)], [-B, conj(D)]]``."""
        D, B = self.D, self.B
        return np.block([[-D, B.conj()], [-B, D.conj()]])


def build_generator(phi_t: np.ndarray, V: PairPotential, grid: Grid1D,
                    t: float = 0.0) -> QuadraticGenerator:
    """Assemble ``D`` and ``B`` along the orbital ``phi_t``.

    ``D = -Delta_h + diag(V * |phi|^2) + X`` with ``X_xy = h v(x-y) phi(x) conj(phi(y))``
    and ``B_xy = h v(x-y) conj(phi(x)) conj(phi(y))``.
    """
    phi = np.asarray(phi_t, dtype=complex)
    grid.check(phi)
    if V.grid != grid:
        raise GridMismatchError("potential and orbital live on different grids")
    Vm = grid.h * V.matrix()
    mean = Vm @ np.abs(phi) ** 2
    D = laplacian_matrix(grid) + np.diag(mean) + Vm * np.outer(phi, phi.conj())
    B = Vm * np.outer(phi.conj(), phi.conj())
    return QuadraticGenerator(0.5 * (D + D.conj().T), 0.5 * (B + B.T), t)


def _signature(M: int) -> np.ndarray:
    return np.concatenate([np.ones(M), -np.ones(M)])


def symplectic_defect(theta: np.ndarray) -> float:
    """Spectral norm of ``theta^* S theta - S``."""
    M = theta.shape[0] // 2
    s = _signature(M)
    return float(np.linalg.norm((theta.conj().T * s) @ theta - np.diag(s), 2))


def _block_defect(theta: np.ndarray) -> float:
    M = theta.shape[0] // 2
    U, Wb = theta[:M, :M], theta[:M, M:]
    W, Ub = theta[M:, :M], theta[M:, M:]
    return float(max(np.abs(Ub - U.conj()).max(), np.abs(Wb - W.conj()).max()))


@dataclass
class BogoliubovMap:
    """``theta(t; s)`` stored in block form ``[[U, conj(W)], [W, conj(U)]]``.

    ``defects`` holds the symplectic defect after every integration step.
    """

    theta: np.ndarray
    s: float
    t: float
    defects: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=complex)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1] or theta.shape[0] % 2:
            raise ValueError("theta must be a square matrix of even size")
        scale = 1.0 + np.abs(theta).max()
        if _block_defect(theta) > 1e-12 * scale:
            raise ValueError("theta does not commute with the doubled conjugation")
        self.theta = theta

    @property
    def M(self) -> int:
        return self.theta.shape[0] // 2

    @property
    def U(self) -> np.ndarray:
        return self.theta[: self.M, : self.M]

    @property
    def W(self) -> np.ndarray:
        return self.theta[self.M:, : self.M]

    @property
    def symplectic_defect(self) -> float:
        return symplectic_defect(self.theta)

    def apply(self, f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = self.theta @ np.concatenate([f, g])
        return out[: self.M], out[self.M:]

    def then(self, later: "BogoliubovMap") -> "BogoliubovMap":
        """Compose with a later flow: ``theta(t; r) = theta(s; r) theta(t; s)``.

        The right multiplication reflects ``i d/dt theta = theta M`` (the
        generator acts first on the input vector).
        """
        if not np.isclose(self.t, later.s):
            raise ValueError(f"cannot compose flows ending at {self.t} and starting at {later.s}")
        return BogoliubovMap(self.theta @ later.theta, self.s, later.t,
                             np.concatenate([self.defects, later.defects]))


def theta_evolve(generator: Callable[[float], np.ndarray], s: float, t: float, dt: float,
                 defect_bound: float = 1e-6) -> BogoliubovMap:
    """Integrate ``i d/dt theta = theta A(t)`` from ``theta(s; s) = 1`` by classical RK4.

    ``generator(t)`` returns the doubled ``2M x 2M`` matrix (for instance
    ``build_generator(...).matrix``).  Raises :class:`StabilityError` when the
    symplectic defect exceeds ``defect_bound * max(1, |t - s|)``.
    """
    A0 = np.asarray(generator(s), dtype=complex)
    n = A0.shape[0]
    theta = np.eye(n, dtype=complex)
    if t == s:
        return BogoliubovMap(theta, s, t)
    steps = int(np.ceil(abs(t - s) / dt - 1e-9))
    h = (t - s) / steps
    bound = defect_bound * max(1.0, abs(t - s))
    defects = np.empty(steps)
    A_left = A0
    for k in range(steps):
        tk = s + k * h
        A_mid = generator(tk + 0.5 * h)
        A_right = generator(tk + h)
        k1 = -1j * theta @ A_left
        k2 = -1j * (theta + 0.5 * h * k1) @ A_mid
        k3 = -1j * (theta + 0.5 * h * k2) @ A_mid
        k4 = -1j * (theta + h * k3) @ A_right
        theta = theta + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        defects[k] = symplectic_defect(theta)
        if not np.isfinite(defects[k]) or defects[k] > bound:
            raise StabilityError(f"symplectic defect {defects[k]:.2e} exceeds {bound:.0e} "
                                 f"at t={tk + h:.6g}; reduce dt")
        A_left = A_right
    return BogoliubovMap(theta, s, t, defects)


def cosh_sinh(kernel: SqueezeKernel | np.ndarray, tol: float = 1e-16,
              max_terms: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Operator series ``cosh = sum (K conj K)^n / (2n)!`` and ``sinh = sum (K conj K)^n K / (2n+1)!``.

    ``K`` is the operator matrix of the kernel (``h k`` for a lattice kernel).
    Summation stops once the remaining tail, bounded by the Hilbert-Schmidt
    norm of ``K``, falls below ``tol`` relative to the partial sums.
    """
    K = kernel.operator if isinstance(kernel, SqueezeKernel) else np.asarray(kernel, complex)
    n = K.shape[0]
    P = K @ K.conj()
    hs = float(np.linalg.norm(K))
    term_c = np.eye(n, dtype=complex)
    term_s = K.copy()
    ch, sh = term_c.copy(), term_s.copy()
    # bound on the j-th terms from the HS norm: hs^(2j) / (2j)!
    bound = 1.0
    for j in range(1, max_terms):
        term_c = term_c @ P / ((2 * j - 1) * (2 * j))
        term_s = P @ term_s / ((2 * j) * (2 * j + 1))
        ch += term_c
        sh += term_s
        bound *= hs**2 / ((2 * j - 1) * (2 * j))
        if bound * max(1.0, hs) * 2 <= tol * max(1.0, np.linalg.norm(ch)):
            break
    return ch, sh


# -- second-quantized side -----------------------------------------------------

class QuadraticFockPropagator:
    """Time-ordered propagator of ``i d/dt Psi = L(t) Psi`` on a truncated basis.

    Steps use the fourth-order Magnus expansion with two Gauss nodes,
    ``H_eff = (H1 + H2)/2 - i sqrt(3) dt / 12 [H2, H1]``, each applied by
    short-time Krylov exponentiation.  ``generator(t)`` returns a
    :class:`QuadraticGenerator`.
    """

    _GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)

    def __init__(self, basis: FockBasis, generator: Callable[[float], QuadraticGenerator],
                 t0: float, t1: float, dt: float, config: KrylovConfig = KRYLOV_DEFAULT):
        self.basis = basis
        self.t0, self.t1 = t0, t1
        self.config = config
        M = basis.M
        c = [basis.creation(i) for i in range(M)]
        a = [basis.annihilation(i) for i in range(M)]
        self._hop = {(i, j): (c[i] @ a[j]).tocsr() for i in range(M) for j in range(M)}
        self._pair = {(i, j): (c[i] @ c[j]).tocsr() for i in range(M) for j in range(i, M)}
        steps = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9))) if t1 != t0 else 0
        self.dt = (t1 - t0) / steps if steps else 0.0
        self._steps = []
        for k in range(steps):
            tk = t0 + k * self.dt
            H1 = self.hamiltonian(generator(tk + self._GAUSS[0] * self.dt))
            H2 = self.hamiltonian(generator(tk + self._GAUSS[1] * self.dt))
            comm = (H2 @ H1 - H1 @ H2).tocsr()
            self._steps.append((0.5 * (H1 + H2) - 1j * np.sqrt(3) * self.dt / 12 * comm).tocsr())

    def hamiltonian(self, gen: QuadraticGenerator) -> sp.csr_matrix:
        """Sparse matrix of ``L`` for the blocks ``D``, ``B``."""
        if gen.M != self.basis.M:
            raise GridMismatchError("generator and basis disagree on the number of modes")
        n = self.basis.size
        H = sp.csr_matrix((n, n), dtype=complex)
        for (i, j), op in self._hop.items():
            if gen.D[i, j] != 0:
                H = H + gen.D[i, j] * op
        pair = sp.csr_matrix((n, n), dtype=complex)
        for (i, j), op in self._pair.items():
            # symmetric B: off-diagonal pairs appear twice in the double sum
            w = 0.5 * np.conj(gen.B[i, j]) * (1 if i == j else 2)
            if w != 0:
                pair = pair + w * op
        return (H + pair + pair.conj().T).tocsr()

    def apply(self, psi: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """``U(t1; t0) psi``, or ``U(t1; t0)^* psi`` when ``adjoint``."""
        self.basis.check(psi)
        out = np.asarray(psi, dtype=complex)
        order = reversed(self._steps) if adjoint else self._steps
        sign = -1.0 if adjoint else 1.0
        for H in order:
            out = expm_multiply_hermitian(H, out, sign * self.dt, self.config)
        return out


def quadratic_fock_evolve(orbital: OrbitalPath, V: PairPotential, grid: Grid1D,
                          basis: FockBasis, psi: np.ndarray, t: float, dt: float,
                          s: float = 0.0, norm_tol: float = 1e-8,
                          config: KrylovConfig = KRYLOV_DEFAULT) -> np.ndarray:
    """Propagate ``psi`` from ``s`` to ``t`` under ``L(t)`` built along ``orbital``.

    Raises :class:`TruncationError` when the norm drifts by more than
    ``norm_tol`` (pairing pushing weight into the cutoff).
    """
    prop = QuadraticFockPropagator(basis, lambda r: build_generator(orbital(r), V, grid, r),
                                   s, t, dt, config)
    out = prop.apply(psi)
    _check_norm(basis, psi, out, norm_tol)
    return out


def _check_norm(basis: FockBasis, before, after, norm_tol):
    top = basis.sector_slice(basis.N_max)
    defect = abs(np.linalg.norm(after) - np.linalg.norm(before))
    top_weight = float(np.linalg.norm(after[top]) ** 2)
    if defect > norm_tol or top_weight > norm_tol:
        raise TruncationError(f"quadratic evolution: norm defect {defect:.2e}, "
                              f"top-sector weight {top_weight:.2e} at N_max={basis.N_max}")


def field_operator(basis: FockBasis, grid: Grid1D, f: np.ndarray, g: np.ndarray) -> sp.csr_matrix:
    """``A(f, g) = a(f) + a^*(conj(g))``."""
    return (smeared_annihilation(basis, grid, f)
            + smeared_creation(basis, grid, np.conj(np.asarray(g, dtype=complex)))).tocsr()


def verify_bogoliubov_action(theta: BogoliubovMap, propagator: QuadraticFockPropagator,
                             grid: Grid1D, pairs: Iterable[Sequence[np.ndarray]],
                             vectors: Iterable[np.ndarray]) -> float:
    """Max over pairs and vectors of ``|U^* A(f,g) U psi - A(theta (f,g)) psi|``.

    Each residual is normalized by ``max(1, |A(theta (f,g)) psi|)``.  Both
    representations must be built along the same orbital path and interval.
    """
    if not (np.isclose(theta.s, propagator.t0) and np.isclose(theta.t, propagator.t1)):
        raise ValueError("theta and the Fock propagator cover different intervals")
    basis = propagator.basis
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    evolved = [propagator.apply(v) for v in vectors]
    worst = 0.0
    for f, g in pairs:
        A = field_operator(basis, grid, f, g)
        A_theta = field_operator(basis, grid, *theta.apply(np.asarray(f, complex),
                                                           np.asarray(g, complex)))
        for v, Uv in zip(vectors, evolved):
            lhs = propagator.apply(A @ Uv, adjoint=True)
            rhs = A_theta @ v
            worst = max(worst, float(np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(rhs))))
    return worst


def clt_variance(theta: BogoliubovMap, phi: np.ndarray, phi_t: np.ndarray, O: np.ndarray,
                 grid: Grid1D) -> float:
    """Limiting variance of ``N^{-1/2} sum_j (O^(j) - <phi_t, O phi_t>)``.

    With ``F = (O phi_t, conj(O phi_t)) / sqrt(2)`` and ``G = theta(t; 0) F``,
    returns ``|G|^2 - |<G, (phi, conj(phi)) / sqrt(2)>|^2``.  The subtracted
    term removes the particle-number fluctuations of the coherent
    representation, which are absent for states of fixed particle number.
    """
    O = np.asarray(O, dtype=complex)
    if O.shape != (grid.M, grid.M):
        raise GridMismatchError(f"observable of shape {O.shape} on grid with M={grid.M}")
    if np.abs(O - O.conj().T).max() > 1e-12 * (1 + np.abs(O).max()):
        raise ValueError("observable must be Hermitian")
    phi = np.asarray(phi, dtype=complex)
    phi_t = np.asarray(phi_t, dtype=complex)
    grid.check(phi, phi_t)
    Ophi = O @ phi_t
    F = np.concatenate([Ophi, Ophi.conj()]) / np.sqrt(2)
    G = theta.theta @ F
    ref = np.concatenate([phi, phi.conj()]) / np.sqrt(2)
    norm2 = grid.h * np.vdot(G, G).real
    overlap = grid.h * np.vdot(G, ref)
    return float(norm2 - abs(overlap) ** 2)
