"""Entropy structure of the (n+1)-species volume-fraction model.

A composition is a length-``n`` array ``u`` of the fractions of species
``1..n``; species 0 is always the eliminated one, with fraction
``1 - sum(u)``.  The coefficient table ``K`` is the full symmetric
``(n+1) x (n+1)`` array with a zero diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: Slack accepted on the simplex constraints before a hard error.
SIMPLEX_TOL = 1e-12


def check_kmatrix(K) -> np.ndarray:
    """Validate a cross-diffusion coefficient table and return it as floats."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 2:
        raise ValueError(f"K must be a square (n+1)x(n+1) table, got shape {K.shape}")
    if not np.allclose(K, K.T, rtol=0.0, atol=0.0):
        raise ValueError("K must be symmetric")
    if np.any(np.diag(K) != 0.0):
        raise ValueError("K must have a zero diagonal")
    off = K[~np.eye(K.shape[0], dtype=bool)]
    if np.any(off <= 0.0):
        raise ValueError("off-diagonal entries of K must be positive")
    return K


def _as_composition(u, interior=False) -> np.ndarray:
    u = np.array(u, dtype=float, ndmin=1)
    if u.ndim != 1:
        raise DomainError("a composition is a 1-d vector")
    rho = u.sum()
    if np.any(u < -SIMPLEX_TOL) or rho > 1.0 + SIMPLEX_TOL:
        raise DomainError(f"composition {u} lies outside the closed simplex")
    u = np.clip(u, 0.0, None)
    if u.sum() > 1.0:
        u = u / u.sum()
    if interior and (np.any(u <= 0.0) or u.sum() >= 1.0):
        raise DomainError(f"composition {u} is not strictly interior")
    return u


def is_interior(u) -> bool:
    """True when every fraction, including species 0, is strictly positive."""
    u = np.asarray(u, dtype=float)
    return bool(np.all(u > 0.0) and u.sum() < 1.0)


def full_fractions(u) -> np.ndarray:
    """Return all ``n+1`` fractions, species 0 first."""
    u = _as_composition(u)
    return np.concatenate(([max(1.0 - u.sum(), 0.0)], u))


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0.0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy(u) -> float:
    """Logarithmic entropy density ``sum u_i log u_i + (1-rho) log(1-rho)``.

    Zero fractions contribute nothing (``x log x -> 0``).
    """
    u = _as_composition(u)
    return float(_xlogx(u).sum() + _xlogx(max(1.0 - u.sum(), 0.0)))


def entropy_grad(u) -> np.ndarray:
    u = _as_composition(u, interior=True)
    return np.log(u) - np.log1p(-u.sum())


def entropy_grad_inv(w) -> np.ndarray:
    """Inverse of :func:`entropy_grad`, evaluated with a max shift.

    The implied species 0 carries the reference exponent 0, so the shift
    is ``max(0, max(w))`` and no exponential can overflow.
    """
    w = np.array(w, dtype=float, ndmin=1)
    shift = max(0.0, float(w.max()))
    ew = np.exp(w - shift)
    return ew / (np.exp(-shift) + ew.sum())


def entropy_hessian(u) -> np.ndarray:
    u = _as_composition(u, interior=True)
    H = np.full((u.size, u.size), 1.0 / (1.0 - u.sum()))
    H[np.diag_indices(u.size)] += 1.0 / u
    return H


def _check_dims(u, K):
    if K.shape[0] != u.size + 1:
        raise ValueError(
            f"composition has {u.size} entries but K describes {K.shape[0] - 1} free species"
        )


def diffusion_matrix(u, K) -> np.ndarray:
    """Reduced diffusion matrix ``A(u)`` acting on the gradients of species 1..n."""
    u = _as_composition(u)
    K = np.asarray(K, dtype=float)
    _check_dims(u, K)
    Kr = K[1:, 1:]
    k0 = K[1:, 0]
    D = Kr - k0[:, None]
    np.fill_diagonal(D, 0.0)
    A = -D * u[:, None]
    A[np.diag_indices(u.size)] = D @ u + k0
    return A


def mobility_matrix(u, K) -> np.ndarray:
    """Mobility ``M(u) = A(u) (D^2 h(u))^{-1}``, written in closed form.

    The closed form is continuous up to the boundary of the simplex.
    """
    u = _as_composition(u)
    K = np.asarray(K, dtype=float)
    _check_dims(u, K)
    Kr = K[1:, 1:].copy()
    np.fill_diagonal(Kr, 0.0)
    M = -Kr * np.outer(u, u)
    M[np.diag_indices(u.size)] = K[1:, 0] * (1.0 - u.sum()) * u + u * (Kr @ u)
    return M


def relative_entropy(u, f) -> float:
    """Entropy of ``u`` relative to the interior reference composition ``f``."""
    u = _as_composition(u)
    f = _as_composition(f, interior=True)
    if u.size != f.size:
        raise ValueError("u and f must have the same length")
    rest_u = max(1.0 - u.sum(), 0.0)
    val = np.sum(_xlogx(u) - u * np.log(f))
    val += _xlogx(rest_u) - rest_u * np.log1p(-f.sum())
    # rounding can push an exact zero slightly negative
    return float(max(val, 0.0))


@dataclass(frozen=True)
class EllipticityConstants:
    """Constants of the lower bound ``z.H A z >= alpha * sum u_i^(2 m_i - 2) z_i^2``.

    For the logarithmic entropy every exponent ``m_i`` equals 1/2, which
    turns the weight into ``1/u_i``.
    """

    alpha: float
    m: tuple

    @classmethod
    def from_kmatrix(cls, K):
        K = check_kmatrix(K)
        off = K[~np.eye(K.shape[0], dtype=bool)]
        return cls(alpha=float(off.min()), m=(0.5,) * (K.shape[0] - 1))


def ellipticity_check(u, z, K):
    """Return ``(lhs, rhs)`` of the ellipticity bound at ``(u, z)``.

    ``lhs = z^T D^2h(u) A(u) z`` and ``rhs = alpha * sum z_i^2 / u_i`` with
    ``alpha`` the smallest off-diagonal entry of ``K`` (species 0 included).
    """
    u = _as_composition(u, interior=True)
    z = np.asarray(z, dtype=float)
    consts = EllipticityConstants.from_kmatrix(K)
    lhs = float(z @ entropy_hessian(u) @ diffusion_matrix(u, K) @ z)
    rhs = float(consts.alpha * np.sum(z**2 / u))
    return lhs, rhs


def shifted_mobility(u, K, shift) -> np.ndarray:
    """Mobility built from coefficients ``K_ij - shift`` (positive semidefinite for ``shift <= min K``)."""
    K = np.asarray(K, dtype=float)
    Ks = K - shift
    np.fill_diagonal(Ks, 0.0)
    u = _as_composition(u)
    Kr = Ks[1:, 1:]
    M = -Kr * np.outer(u, u)
    M[np.diag_indices(u.size)] = Ks[1:, 0] * (1.0 - u.sum()) * u + u * (Kr @ u)
    return M
