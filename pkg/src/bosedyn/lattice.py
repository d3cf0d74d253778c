"""Periodic one-dimensional lattice, pair potentials and one-body linear algebra.

Orbitals are plain complex numpy arrays of length ``grid.M``.  Every L2
quantity carries the measure weight ``h`` so that ``l2_inner(grid, f, f)``
approximates the continuum integral.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "Grid1D",
    "PairPotential",
    "laplacian_apply",
    "laplacian_matrix",
    "convolve",
    "l2_inner",
    "l2_norm",
    "normalize",
    "plane_wave",
    "kinetic_eigenvalues",
]


@dataclass(frozen=True)
class Grid1D:
    """Periodic lattice with ``M`` sites and spacing ``h``."""

    M: int
    h: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"need M >= 1 sites, got {self.M}")
        if not self.h > 0:
            raise ValueError(f"need spacing h > 0, got {self.h}")

    @property
    def L(self) -> float:
        return self.M * self.h

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.h

    def distances(self) -> np.ndarray:
        """Periodic distance of each displacement d = 0..M-1."""
        d = np.arange(self.M)
        return np.minimum(d, self.M - d) * self.h

    def check(self, *arrays: np.ndarray) -> None:
        for a in arrays:
            if np.shape(a)[-1] != self.M:
                raise GridMismatchError(
                    f"array of length {np.shape(a)[-1]} on grid with M={self.M}")


@dataclass(frozen=True)
class PairPotential:
    """Even pair interaction sampled per lattice displacement.

    ``samples[d]`` is ``V`` at displacement ``d`` (mod M).
    """

    grid: Grid1D
    samples: np.ndarray
    label: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.samples, dtype=float)
        self.grid.check(v)
        if not np.all(np.isfinite(v)):
            raise ValueError("potential samples must be finite")
        if not np.allclose(v, np.roll(v[::-1], 1), rtol=0, atol=1e-14 * (1 + np.abs(v).max())):
            raise ValueError("pair potential must be even: v[d] == v[-d mod M]")
        object.__setattr__(self, "samples", v)

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable[[np.ndarray], np.ndarray],
                      label: str = "custom", **params) -> "PairPotential":
        """Sample ``fn`` at the periodic distance of each displacement."""
        return cls(grid, np.asarray(fn(grid.distances()), dtype=float), label, params)

    @classmethod
    def zero(cls, grid: Grid1D) -> "PairPotential":
        return cls(grid, np.zeros(grid.M), "zero")

    @classmethod
    def gaussian(cls, grid: Grid1D, strength: float, width: float) -> "PairPotential":
        """``strength * exp(-dist^2 / (2 width^2))``."""
        return cls.from_function(
            grid, lambda r: strength * np.exp(-r**2 / (2 * width**2)),
            "gaussian", strength=strength, width=width)

    @classmethod
    def mollified_delta(cls, grid: Grid1D, mass: float, width: float) -> "PairPotential":
        """Periodic Gaussian of lattice mass ``h * sum(v) == mass``.

        For ``width`` well below ``h`` the profile collapses onto the origin and
        the kernel becomes the lattice delta ``mass / h``.
        """
        r = grid.distances()
        prof = np.exp(-r**2 / (2 * width**2)) if width > 0 else (r == 0).astype(float)
        total = grid.h * prof.sum()
        return cls(grid, mass * prof / total, "mollified_delta", {"mass": mass, "width": width})

    @classmethod
    def local(cls, grid: Grid1D, mass: float) -> "PairPotential":
        """Lattice delta of mass ``mass``: only the on-site entry is nonzero."""
        v = np.zeros(grid.M)
        v[0] = mass / grid.h
        return cls(grid, v, "local", {"mass": mass})

    @property
    def mass(self) -> float:
        return float(self.grid.h * self.samples.sum())

    def matrix(self) -> np.ndarray:
        """Circulant matrix ``V[x, y] = v[(x - y) mod M]``."""
        M = self.grid.M
        idx = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
        return self.samples[idx]


def kinetic_eigenvalues(grid: Grid1D) -> np.ndarray:
    """Eigenvalues of the periodic -Laplacian on plane waves ``m = 0..M-1``."""
    k = 2 * np.pi * np.arange(grid.M) / grid.L
    return (2.0 / grid.h**2) * (1 - np.cos(k * grid.h))


def laplacian_apply(grid: Grid1D, phi: np.ndarray) -> np.ndarray:
    """Return ``(-Delta_h phi)_i = (2 phi_i - phi_{i+1} - phi_{i-1}) / h^2``."""
    phi = np.asarray(phi)
    grid.check(phi)
    return (2 * phi - np.roll(phi, -1, axis=-1) - np.roll(phi, 1, axis=-1)) / grid.h**2


def laplacian_matrix(grid: Grid1D) -> np.ndarray:
    """Dense matrix of ``-Delta_h`` in the site basis."""
    return laplacian_apply(grid, np.eye(grid.M)).T


def convolve(potential: PairPotential, rho: np.ndarray) -> np.ndarray:
    """Periodic convolution ``(V * rho)_i = h sum_j v[i-j] rho_j``."""
    grid = potential.grid
    rho = np.asarray(rho)
    grid.check(rho)
    # circulant product via FFT; v is even so the result is real for real rho
    out = grid.h * np.fft.ifft(np.fft.fft(potential.samples) * np.fft.fft(rho))
    return out.real if np.isrealobj(rho) else out


def l2_inner(grid: Grid1D, phi: np.ndarray, psi: np.ndarray) -> complex:
    """``<phi, psi> = h sum conj(phi_i) psi_i`` (antilinear in the first slot)."""
    grid.check(phi, psi)
    return complex(grid.h * np.vdot(phi, psi))


def l2_norm(grid: Grid1D, phi: np.ndarray) -> float:
    return float(np.sqrt(l2_inner(grid, phi, phi).real))


def normalize(grid: Grid1D, phi: np.ndarray) -> np.ndarray:
    n = l2_norm(grid, phi)
    if n == 0:
        raise ValueError("cannot normalize the zero orbital")
    return np.asarray(phi, dtype=complex) / n


def plane_wave(grid: Grid1D, m: int) -> np.ndarray:
    """Normalized plane wave with momentum ``2 pi m / L``."""
    k = 2 * np.pi * m / grid.L
    return np.exp(1j * k * grid.x) / np.sqrt(grid.L)
