"""Truncated Fock-space operators, the rotating-frame Hamiltonian and the Lindblad generator.

Density matrices are vectorized column-wise (Fortran order), so that
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .params import ModelParams, TruncationError


def annihilation(dim: int) -> sp.csr_matrix:
    """Sparse annihilation operator with ``sqrt(n)`` on the first superdiagonal."""
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1, shape=(dim, dim), format="csr")


def number_diagonal(dim: int) -> np.ndarray:
    return np.arange(dim, dtype=float)


def radial_energy(params: ModelParams, n):
    """Drive-free quasienergy ``-delta n + alpha n^2/2 + sum alpha_q n^q`` (works on arrays)."""
    n = np.asarray(n, dtype=float)
    e = -params.delta * n + 0.5 * params.alpha * n**2
    for q, c in params.alpha_q.items():
        e = e + c * n**q
    return e


def nonlinear_diagonal(params: ModelParams, dim: int) -> np.ndarray:
    """Diagonal of the high-order part ``V = sum alpha_q n^q``."""
    n = number_diagonal(dim)
    v = np.zeros(dim)
    for q, c in params.alpha_q.items():
        v += c * n**q
    return v


def check_truncation(params: ModelParams, n_max: int) -> None:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if params.delta > 0 and params.delta / params.alpha > n_max / 2:
        raise TruncationError(n_max, params.default_n_max())


def resolve_n_max(params: ModelParams, n_max: int | str | None) -> int:
    if n_max is None or n_max == "auto":
        return params.default_n_max()
    return int(n_max)


def build_hamiltonian(params: ModelParams, n_max: int | str | None = None, *, check: bool = True) -> np.ndarray:
    """Dense real-symmetric matrix of the effective Hamiltonian on ``n = 0..n_max``.

    Raises :class:`TruncationError` when ``n_max < 2 delta / alpha`` unless
    ``check`` is false.
    """
    n_max = resolve_n_max(params, n_max)
    if check:
        check_truncation(params, n_max)
    elif n_max < 1:
        raise ValueError("n_max must be at least 1")
    dim = n_max + 1
    h = np.diag(radial_energy(params, number_diagonal(dim)))
    off = params.drive * np.sqrt(np.arange(1, dim, dtype=float))
    h[np.arange(dim - 1), np.arange(1, dim)] = off
    h[np.arange(1, dim), np.arange(dim - 1)] = off
    return h


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    if dim is None:
        dim = math.isqrt(v.size)
    return np.asarray(v).reshape(dim, dim, order="F")


def _left(a, eye):
    return sp.kron(eye, a, format="csr")


def _right(b, eye):
    return sp.kron(b.T, eye, format="csr")


def build_lindblad_superoperator(params: ModelParams, n_max: int | str | None = None, *,
                                 hamiltonian: np.ndarray | None = None, check: bool = True) -> sp.csr_matrix:
    """Sparse generator ``L`` with ``d(vec rho)/dt = L vec(rho)``.

    ``L[rho] = i[rho, H] + gamma(N+1) D[a] rho + gamma N D[a^+] rho`` with
    ``D[c] rho = c rho c^+ - {c^+ c, rho}/2``; this equals the
    ``2 a rho a^+ - rho n - n rho + 2N [[a, rho], a^+]`` form.
    """
    if hamiltonian is None:
        hamiltonian = build_hamiltonian(params, n_max, check=check)
    dim = hamiltonian.shape[0]
    eye = sp.identity(dim, format="csr")
    h = sp.csr_matrix(hamiltonian)
    gen = 1j * (_right(h, eye) - _left(h, eye))
    a = annihilation(dim)
    g, nth = params.gamma, params.n_thermal
    for rate, c in ((g * (nth + 1), a), (g * nth, a.T.tocsr())):
        if rate == 0:
            continue
        cdc = (c.T @ c).tocsr()
        gen = gen + rate * (sp.kron(c.conj(), c, format="csr") - 0.5 * _left(cdc, eye) - 0.5 * _right(cdc, eye))
    return gen.tocsr()


def apply_lindblad(params: ModelParams, rho: np.ndarray, hamiltonian: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the master-equation right-hand side directly in matrix form."""
    dim = rho.shape[0]
    if hamiltonian is None:
        hamiltonian = build_hamiltonian(params, dim - 1, check=False)
    a = annihilation(dim).toarray()
    ad = a.T
    n = ad @ a
    g, nth = params.gamma, params.n_thermal
    comm = a @ rho - rho @ a
    return (1j * (rho @ hamiltonian - hamiltonian @ rho)
            + 0.5 * g * (2 * a @ rho @ ad - rho @ n - n @ rho + 2 * nth * (comm @ ad - ad @ comm)))


def thermal_state(dim: int, n_thermal: float) -> np.ndarray:
    """Truncated and renormalized thermal density matrix."""
    if n_thermal == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        p = (n_thermal / (n_thermal + 1)) ** np.arange(dim)
        p /= p.sum()
    return np.diag(p).astype(complex)
