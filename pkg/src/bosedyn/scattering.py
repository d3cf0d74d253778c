"""Zero-energy scattering in three dimensions, reduced to the radial half-line.

The scattering solution ``f`` solves ``(-Delta + V/2) f = 0`` with
``f -> 1`` at infinity.  Note the factor 1/2: for radial ``f`` and
``u(r) = r f(r)`` this becomes

    u'' = (1/2) V(r) u,   u(0) = 0,

and outside the range ``R`` of ``V`` the solution is exactly linear,
``u = alpha (r - a0)``.  With this normalization ``8 pi a0 = int V f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import ConvergenceError
from .fock import SqueezeKernel
from .lattice import Grid1D

__all__ = [
    "RadialPotential",
    "RadialGrid",
    "ScatteringSolution",
    "soft_sphere",
    "smooth_bump",
    "soft_sphere_length",
    "solve_zero_energy",
    "check_identity",
    "coupling_constants",
    "scaled_scattering_length",
    "scaled_mass",
    "correlation_kernel",
]


@dataclass(frozen=True)
class RadialPotential:
    """Radial potential ``V(r)`` supported on ``[0, R]``.

    ``breakpoints`` lists radii in ``(0, R)`` where ``V`` or a derivative
    jumps; the integrator never steps across them.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    R: float
    breakpoints: tuple = ()
    label: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.R, self.fn(r), 0.0)

    def scaled(self, N: float) -> "RadialPotential":
        """``N^2 V(N r)``, supported on ``[0, R/N]``."""
        fn = self.fn
        return RadialPotential(lambda r: N**2 * fn(N * np.asarray(r)), self.R / N,
                               tuple(b / N for b in self.breakpoints),
                               f"{self.label}[N={N}]", dict(self.params, scale=N))

    def integral(self) -> float:
        """``b0 = int V dx = 4 pi int_0^R V(r) r^2 dr``."""
        return 4 * np.pi * _piecewise_quad(lambda r: self(r) * r**2, self.segments())

    def segments(self):
        edges = [0.0, *sorted(self.breakpoints), self.R]
        return list(zip(edges[:-1], edges[1:]))


def soft_sphere(strength: float, R: float) -> RadialPotential:
    """``V(r) = strength`` for ``r <= R``, zero beyond."""
    return RadialPotential(lambda r: strength * np.ones_like(np.asarray(r, dtype=float)), R,
                           (), "soft_sphere", {"strength": strength, "R": R})


def smooth_bump(strength: float, R: float) -> RadialPotential:
    """``V(r) = strength (1 - (r/R)^2)^2`` for ``r <= R``."""
    return RadialPotential(lambda r: strength * (1 - (np.asarray(r) / R) ** 2) ** 2, R,
                           (), "smooth_bump", {"strength": strength, "R": R})


def soft_sphere_length(strength: float, R: float) -> float:
    """Closed-form scattering length ``R (1 - tanh(kR)/(kR))`` with ``k = sqrt(strength/2)``."""
    if strength == 0:
        return 0.0
    k = np.sqrt(strength / 2)
    return float(R * (1 - np.tanh(k * R) / (k * R)))


@dataclass(frozen=True)
class RadialGrid:
    """Integration domain ``[0, r_max]`` and the nodes at which ``f`` is reported."""

    r_max: float
    R: float
    n_nodes: int = 401

    def __post_init__(self):
        if self.r_max < 5 * self.R:
            raise ValueError(f"r_max={self.r_max} must be at least 5 R = {5 * self.R}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_nodes)

    @classmethod
    def for_potential(cls, V: RadialPotential, factor: float = 10.0, n_nodes: int = 401):
        return cls(factor * V.R, V.R, n_nodes)


def _piecewise_quad(fn, segments) -> float:
    total = 0.0
    for a, b in segments:
        if b > a:
            total += quad(fn, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return total


@dataclass
class ScatteringSolution:
    """Radial zero-energy solution with its scattering length.

    ``alpha`` is the asymptotic slope of ``u``; ``f = u / (alpha r)``.
    """

    potential: RadialPotential
    grid: RadialGrid
    a0: float
    alpha: float
    fit_residual: float
    error_estimate: float
    _pieces: list = field(repr=False, default_factory=list)

    def u(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            if ri >= self.potential.R:
                out[i] = self.alpha * (ri - self.a0)
                continue
            for a, b, sol in self._pieces:
                if a <= ri <= b:
                    out[i] = sol(ri)[0]
                    break
        return out

    def f(self, r) -> np.ndarray:
        """``u(r) / (alpha r)``, with the limit ``1/alpha`` at the origin."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        small = r < 1e-12
        out[small] = 1.0 / self.alpha
        out[~small] = self.u(r[~small]) / (self.alpha * r[~small])
        return out

    def omega(self, r) -> np.ndarray:
        return 1.0 - self.f(r)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def profile(self) -> np.ndarray:
        return self.f(self.nodes)


def _integrate(V: RadialPotential, r_max: float, rtol: float):
    """Integrate ``(u, u')`` outward; returns dense pieces and the end state."""
    y = np.array([0.0, 1.0])
    pieces = []
    edges = [0.0, *sorted(V.breakpoints), V.R]
    scale = V.R

    def rhs(r, y):
        return [y[1], 0.5 * float(V(r)) * y[0]]

    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol,
                        atol=rtol * 1e-3 * min(scale, 1.0), dense_output=True)
        if not sol.success:
            raise ConvergenceError(f"radial integration failed: {sol.message}")
        pieces.append((a, b, sol.sol))
        y = sol.y[:, -1]
    return pieces, y


def _solve(V: RadialPotential, grid: RadialGrid, rtol: float):
    pieces, (uR, duR) = _integrate(V, grid.r_max, rtol)
    # beyond R the solution is linear; sample it on the fit window and regress
    lo = max(2 * V.R, 0.5 * grid.r_max)
    rs = np.linspace(lo, grid.r_max, 64)
    us = uR + duR * (rs - V.R)
    A = np.column_stack([rs, np.ones_like(rs)])
    (alpha, c), *_ = np.linalg.lstsq(A, us, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [alpha, c] - us) ** 2)) / max(abs(us).max(), 1e-300))
    return pieces, float(alpha), float(-c / alpha), resid


def solve_zero_energy(V: RadialPotential, grid: RadialGrid | None = None,
                      rtol: float = 1e-10, fit_tol: float = 1e-8) -> ScatteringSolution:
    """Solve the radial zero-energy equation and extract ``a0``.

    ``error_estimate`` is ``|a0(rtol) - a0(rtol/100)|`` plus a roundoff floor.
    Raises ``ValueError`` for a negative slope (bound-state regime) and
    :class:`ConvergenceError` if the linear fit residual exceeds ``fit_tol``.
    """
    if grid is None:
        grid = RadialGrid.for_potential(V)
    probe = V(np.linspace(0, V.R, 257))
    if np.any(probe < 0):
        raise ValueError("only repulsive potentials V >= 0 are supported")
    pieces, alpha, a0, resid = _solve(V, grid, rtol)
    if alpha <= 0:
        raise ValueError("negative asymptotic slope: potential supports a bound state")
    if resid > fit_tol:
        raise ConvergenceError(f"asymptotic fit residual {resid:.2e} > {fit_tol:.0e}")
    _, _, a0_fine, _ = _solve(V, grid, rtol / 100)
    err = abs(a0 - a0_fine) + 1e-13 * (abs(a0) + V.R)
    return ScatteringSolution(V, grid, a0, alpha, resid, err, pieces)


def check_identity(s: ScatteringSolution) -> dict:
    """Compare ``8 pi a0`` with ``4 pi int V f r^2 dr`` by adaptive quadrature."""
    V = s.potential
    rhs = 4 * np.pi * _piecewise_quad(lambda r: float(V(r)) * float(s.f(r)[0]) * r**2,
                                      V.segments())
    lhs = 8 * np.pi * s.a0
    denom = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / denom if denom > 0 else 0.0
    return {"lhs": lhs, "rhs": rhs, "rel_err": rel}


def coupling_constants(s: ScatteringSolution) -> dict:
    """``b0 = int V`` (first-order Born coupling) and ``g_GP = 8 pi a0``."""
    b0 = s.potential.integral()
    g = 8 * np.pi * s.a0
    if g > b0 * (1 + 1e-10) + 1e-14:
        raise AssertionError(f"8 pi a0 = {g} exceeds b0 = {b0} for a repulsive potential")
    return {"b0": b0, "g_GP": g}


def scaled_scattering_length(s: ScatteringSolution, N: float, direct: bool = False,
                             rel_tol: float = 1e-8) -> float:
    """Scattering length ``a0 / N`` of ``N^2 V(N x)``.

    With ``direct=True`` the rescaled problem is solved from scratch and must
    agree with the scaling law to ``rel_tol``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    a_N = s.a0 / N
    if direct:
        VN = s.potential.scaled(N)
        sN = solve_zero_energy(VN, RadialGrid(s.grid.r_max / N, VN.R, s.grid.n_nodes))
        denom = max(abs(a_N), 1e-300)
        if abs(sN.a0 - a_N) > rel_tol * denom and a_N != 0:
            raise ConvergenceError(f"direct resolve a0={sN.a0!r} vs a0/N={a_N!r}")
        return sN.a0
    return a_N


def scaled_mass(s: ScatteringSolution, N: float) -> float:
    """``int N^3 V(N x) f(N x) dx``, equal to ``8 pi a0`` for every ``N``."""
    V = s.potential

    def integrand(r):
        return N**3 * float(V(N * r)) * float(s.f(N * r)[0]) * r**2

    return 4 * np.pi * _piecewise_quad(integrand, [(a / N, b / N) for a, b in V.segments()])


def correlation_kernel(s: ScatteringSolution, N: float, phi: np.ndarray, grid: Grid1D,
                       tail: bool = True) -> SqueezeKernel:
    """``k(x, y) = -N omega(N |x - y|) phi(x) phi(y)`` on the periodic lattice.

    Beyond ``r_max`` the exact exterior form ``omega = a0 / r`` is used when
    ``tail`` is true.
    """
    phi = np.asarray(phi, dtype=complex)
    grid.check(phi)
    M = grid.M
    d = np.abs(np.arange(M)[:, None] - np.arange(M)[None, :])
    dist = np.minimum(d, M - d) * grid.h
    r = N * dist
    if not tail and r.max() > s.grid.r_max:
        raise ValueError("omega needed beyond r_max and tail extension disabled")
    flat = np.unique(r)
    om = s.omega(flat)
    omega = om[np.searchsorted(flat, r)]
    return SqueezeKernel(grid, -N * omega * np.outer(phi, phi))
