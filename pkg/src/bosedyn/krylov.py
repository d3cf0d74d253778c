"""Short-time Lanczos propagator for ``exp(-i H t) v`` with Hermitian ``H``.

Each internal step builds an orthonormal Krylov basis of dimension at most
``max_dim``, exponentiates the small tridiagonal projection exactly and uses
the standard a-posteriori estimate ``beta_m |[exp(-i T tau)]_{m-1,0}|`` to
shrink the step until the local error is below ``tol``.
"""
from __future__ import annotations

from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError

__all__ = ["KrylovConfig", "expm_multiply_hermitian", "as_matvec"]

Operator = Union[np.ndarray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]]


class KrylovConfig:
    """Tolerance and subspace size, shared by every Krylov-based routine."""

    def __init__(self, tol: float = 1e-10, max_dim: int = 40, max_steps: int = 100_000):
        self.tol = tol
        self.max_dim = max_dim
        self.max_steps = max_steps

    def __repr__(self):
        return f"KrylovConfig(tol={self.tol}, max_dim={self.max_dim})"


DEFAULT = KrylovConfig()


def as_matvec(H: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if callable(H):
        return H
    return lambda v: H @ v


def _lanczos(matvec, v, m_max):
    n = v.shape[0]
    m_max = min(m_max, n)
    V = np.empty((m_max + 1, n), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[0] = v
    for j in range(m_max):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        # full reorthogonalization keeps the tridiagonal projection trustworthy
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * (abs(alpha[j]) + 1.0):
            return V[: j + 1], alpha[: j + 1], beta[: j + 1], True
        V[j + 1] = w / b
    return V[:m_max], alpha, beta, False


def expm_multiply_hermitian(H: Operator, v: np.ndarray, t: float,
                            config: KrylovConfig = DEFAULT) -> np.ndarray:
    """Return ``exp(-i H t) v`` for Hermitian ``H`` (dense, sparse or matvec)."""
    v = np.asarray(v, dtype=complex)
    if t == 0 or not np.any(v):
        return v.copy()
    matvec = as_matvec(H)
    remaining = float(t)
    sign = 1.0 if remaining > 0 else -1.0
    remaining = abs(remaining)
    tau = None
    out = v.copy()
    steps = 0
    while remaining > 0:
        steps += 1
        if steps > config.max_steps:
            raise ConvergenceError("Krylov propagation exceeded max_steps")
        nrm = np.linalg.norm(out)
        if nrm == 0:
            return out
        V, a, b, invariant = _lanczos(matvec, out / nrm, config.max_dim)
        m = len(a)
        T = np.diag(a) + np.diag(b[: m - 1], 1) + np.diag(b[: m - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        if tau is None:
            # spectral width of the projection sets the first trial step
            width = max(evals.max() - evals.min(), 1e-300)
            tau = min(remaining, 0.5 * m / width) if not invariant else remaining
        tau = min(tau, remaining)
        for _ in range(60):
            c = evecs @ (np.exp(-1j * sign * tau * evals) * evecs[0].conj())
            err = 0.0 if invariant else b[m - 1] * abs(c[m - 1])
            if err <= config.tol * tau / max(abs(t), tau):
                break
            tau *= 0.5
        else:
            raise ConvergenceError(
                f"Krylov step did not converge at max_dim={config.max_dim}")
        out = nrm * (V.T @ c)
        remaining -= tau
        if err < 0.1 * config.tol * tau / max(abs(t), tau):
            tau *= 1.5
    return out
