"""Hartree and Gross-Pitaevskii evolution on the periodic lattice, GP energy and minimizer.

Both evolutions are split-step schemes: the kinetic flow is exact in the
plane-wave basis (FFT), the potential/nonlinear flow is exact pointwise
because it leaves ``|phi|^2`` invariant.  ``order=2`` is Strang splitting,
``order=4`` the Yoshida triple-jump composition of Strang steps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, StabilityError
from .lattice import (
    Grid1D,
    PairPotential,
    convolve,
    kinetic_eigenvalues,
    l2_inner,
    l2_norm,
    laplacian_apply,
    laplacian_matrix,
)

__all__ = [
    "MeanFieldProblem",
    "Trajectory",
    "hartree_evolve",
    "gp_evolve",
    "hartree_energy",
    "gp_energy",
    "gp_minimize",
]

_CBRT2 = 2 ** (1 / 3)
_YOSHIDA = (1 / (2 - _CBRT2), -_CBRT2 / (2 - _CBRT2), 1 / (2 - _CBRT2))


@dataclass
class MeanFieldProblem:
    """One-body problem: either a pair kernel or a local coupling, plus data.

    Exactly one of ``kernel`` and ``coupling`` must be set.
    """

    grid: Grid1D
    phi0: np.ndarray
    kernel: Optional[PairPotential] = None
    coupling: Optional[float] = None
    V_ext: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.kernel is None) == (self.coupling is None):
            raise ValueError("give exactly one of kernel and coupling")
        self.phi0 = np.asarray(self.phi0, dtype=complex)
        self.grid.check(self.phi0)
        if abs(l2_norm(self.grid, self.phi0) - 1) > 1e-10:
            raise ValueError("initial orbital must be normalized")
        if self.V_ext is not None:
            self.V_ext = np.asarray(self.V_ext, dtype=float)
            self.grid.check(self.V_ext)

    def potential(self, phi: np.ndarray) -> np.ndarray:
        """Real self-consistent potential ``V_ext + V * |phi|^2`` (or ``mu |phi|^2``)."""
        rho = np.abs(phi) ** 2
        if self.kernel is not None:
            pot = convolve(self.kernel, rho)
        else:
            pot = self.coupling * rho
        if self.V_ext is not None:
            pot = pot + self.V_ext
        return pot


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), M)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation between stored states."""
        i = np.searchsorted(self.times, t)
        if i < len(self.times) and np.isclose(self.times[i], t, atol=1e-12):
            return self.states[i]
        if i == 0 or i >= len(self.times):
            raise ValueError(f"t={t} outside the stored trajectory")
        t0, t1 = self.times[i - 1], self.times[i]
        s = (t - t0) / (t1 - t0)
        return (1 - s) * self.states[i - 1] + s * self.states[i]


def _strang(problem: MeanFieldProblem, phi: np.ndarray, tau: float, ek: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5j * tau * problem.potential(phi)) * phi
    phi = np.fft.ifft(np.exp(-1j * tau * ek) * np.fft.fft(phi))
    return np.exp(-0.5j * tau * problem.potential(phi)) * phi


def _check_step(problem: MeanFieldProblem, dt: float, ek: np.ndarray) -> None:
    # accuracy guard: phase advance per step must resolve the fastest mode
    scale = ek.max() + np.abs(problem.potential(problem.phi0)).max()
    if dt <= 0 or dt * scale > np.pi:
        raise StabilityError(f"dt={dt} too large: dt * spectral scale = {dt * scale:.3g} > pi")


def _evolve(problem: MeanFieldProblem, t: float, dt: float, order: int, save_every: int) -> Trajectory:
    grid = problem.grid
    ek = kinetic_eigenvalues(grid)
    _check_step(problem, dt, ek)
    nsteps = int(round(t / dt))
    if not np.isclose(nsteps * dt, t, rtol=0, atol=1e-9 * max(1.0, t)):
        raise ValueError(f"t={t} is not a multiple of dt={dt}")
    if order == 2:
        subs = (1.0,)
    elif order == 4:
        subs = _YOSHIDA
    else:
        raise ValueError("order must be 2 or 4")
    phi = problem.phi0.copy()
    times, states = [0.0], [phi.copy()]
    for step in range(1, nsteps + 1):
        for c in subs:
            phi = _strang(problem, phi, c * dt, ek)
        if not np.all(np.isfinite(phi)):
            raise StabilityError(f"non-finite orbital at step {step}")
        if step % save_every == 0 or step == nsteps:
            times.append(step * dt)
            states.append(phi.copy())
    return Trajectory(np.array(times), np.array(states))


def hartree_evolve(problem: MeanFieldProblem, t: float, dt: float = 1e-3, order: int = 4,
                   save_every: int = 1) -> Trajectory:
    """Trajectory of ``i d/dt phi = (-Delta_h + V_ext) phi + (V * |phi|^2) phi``."""
    if problem.kernel is None:
        raise ValueError("hartree_evolve needs a pair kernel")
    return _evolve(problem, t, dt, order, save_every)


def gp_evolve(problem: MeanFieldProblem, t: float, dt: float = 1e-3, order: int = 4,
              save_every: int = 1) -> Trajectory:
    """Trajectory of ``i d/dt phi = -Delta_h phi + mu |phi|^2 phi (+ V_ext phi)``."""
    if problem.coupling is None:
        raise ValueError("gp_evolve needs a local coupling")
    return _evolve(problem, t, dt, order, save_every)


def hartree_energy(grid: Grid1D, phi: np.ndarray, kernel: PairPotential, V_ext=None) -> float:
    """``<phi, (-Delta_h + V_ext) phi> + (1/2) <|phi|^2, V * |phi|^2>``."""
    rho = np.abs(phi) ** 2
    e = l2_inner(grid, phi, laplacian_apply(grid, phi)).real
    if V_ext is not None:
        e += grid.h * np.sum(V_ext * rho)
    return float(e + 0.5 * grid.h * np.sum(rho * convolve(kernel, rho)))


def gp_energy(grid: Grid1D, phi: np.ndarray, mu: float, V_ext=None) -> float:
    """``h sum [ |grad_h phi|^2 + V_ext |phi|^2 + (mu/2) |phi|^4 ]``.

    The forward-difference gradient satisfies ``h sum |grad_h phi|^2 = <phi, -Delta_h phi>``.
    """
    phi = np.asarray(phi)
    grid.check(phi)
    grad = (np.roll(phi, -1) - phi) / grid.h
    rho = np.abs(phi) ** 2
    dens = np.abs(grad) ** 2 + 0.5 * mu * rho**2
    if V_ext is not None:
        dens = dens + np.asarray(V_ext) * rho
    return float(grid.h * dens.sum())


def _gp_hamiltonian_apply(grid, phi, mu, V_ext):
    out = laplacian_apply(grid, phi) + mu * np.abs(phi) ** 2 * phi
    if V_ext is not None:
        out = out + V_ext * phi
    return out


def gp_minimize(mu: float, V_ext, grid: Grid1D, tol: float = 1e-8, phi0=None,
                step: float = 0.1, max_iter: int = 10_000) -> dict:
    """Minimize the GP energy on the unit sphere by preconditioned projected gradient descent.

    The search direction is the projected gradient ``H_phi phi - lambda phi``
    preconditioned by ``(H_phi + s)^{-1}`` with ``s = 1 - min(V_ext, 0)``, a
    sparse periodic-tridiagonal solve.  A backtracking line search starting
    at ``step`` accepts a step only if the energy does not increase beyond a
    roundoff slack of ``1e-14 |E|``; accepted steps grow by 1.5 up to 1.
    Convergence is declared on the unpreconditioned residual
    ``||H_phi phi - lambda phi|| <= tol``.
    """
    if mu < 0:
        raise ValueError("focusing coupling mu < 0 is not supported")
    V = np.zeros(grid.M) if V_ext is None else np.asarray(V_ext, dtype=float)
    grid.check(V)
    if phi0 is None:
        phi = np.exp(-0.5 * (V - V.min())).astype(complex)
    else:
        phi = np.asarray(phi0, dtype=complex)
    phi = phi / l2_norm(grid, phi)
    K = sp.csc_matrix(laplacian_matrix(grid))
    shift = 1.0 - min(V.min(), 0.0)
    energy = gp_energy(grid, phi, mu, V)
    energies = [energy]
    tau = step
    gnorm = np.inf
    for it in range(max_iter):
        Hphi = _gp_hamiltonian_apply(grid, phi, mu, V)
        lam = l2_inner(grid, phi, Hphi).real
        g = Hphi - lam * phi
        gnorm = l2_norm(grid, g)
        if gnorm <= tol:
            return {"phi": phi, "energy": energy, "chemical_potential": lam,
                    "iterations": it, "gradient_norm": gnorm, "energies": np.array(energies)}
        lu = splu(sp.csc_matrix(K + sp.diags(V + mu * np.abs(phi) ** 2 + shift)))
        d = lu.solve(g.real) + 1j * lu.solve(g.imag)
        d = d - l2_inner(grid, phi, d).real * phi
        slack = 1e-14 * max(abs(energy), 1.0)
        for _ in range(60):
            trial = phi - tau * d
            trial = trial / l2_norm(grid, trial)
            e_trial = gp_energy(grid, trial, mu, V)
            if e_trial <= energy + slack:
                break
            tau *= 0.5
        else:
            raise ConvergenceError("line search failed to decrease the GP energy")
        phi, energy = trial, e_trial
        energies.append(energy)
        tau = min(tau * 1.5, 1.0)
    raise ConvergenceError(f"gp_minimize reached max_iter={max_iter} (gradient {gnorm:.2e})")
