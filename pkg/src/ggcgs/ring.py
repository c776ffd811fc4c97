"""Exact arithmetic in the negacyclic ring Z[x]/(x^n + 1).

Ring elements are length-n integer coefficient vectors (n a power of two),
held as int64 numpy arrays.  Multiplication wraps with a sign flip
(x^n = -1) and uses the O(n^2) schoolbook rule; the parameter sizes in
this project never warrant an NTT, and the attack's hot loop is Gaussian
sampling rather than polynomial products.
"""

from __future__ import annotations

import numpy as np

# Coefficients must stay well inside int64 so schoolbook products cannot
# overflow for in-scope parameter sets.
COEFF_BOUND = 1 << 62


class DimensionError(ValueError):
    """Operands live in rings of different degree."""


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def as_ring_element(a, n: int | None = None) -> np.ndarray:
    """Validate and convert ``a`` to an int64 coefficient vector.

    Checks that the length is a power of two (and equals ``n`` when given)
    and that every coefficient is below the overflow guard bound.
    """
    arr = np.asarray(a, dtype=np.int64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-d coefficient vector, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"expected degree {n}, got {arr.shape[0]}")
    if not is_power_of_two(arr.shape[0]):
        raise DimensionError(f"ring degree {arr.shape[0]} is not a power of two")
    if arr.size and np.max(np.abs(arr)) >= COEFF_BOUND:
        raise OverflowError("coefficient magnitude exceeds the 2^62 guard bound")
    return arr


def ring_mul(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Negacyclic product w = u*v with x^n = -1."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"degree mismatch: {u.shape} vs {v.shape}")
    n = u.shape[0]
    conv = np.convolve(u, v)
    w = conv[:n].copy()
    w[: n - 1] -= conv[n:]
    return w


def skew_circulant(v: np.ndarray) -> np.ndarray:
    """n x n matrix V with V[i, j] = eps * v[(i - j) mod n], eps = -1 on wraparound.

    The first column is v itself and u*v = u @ V.T for any u.
    """
    v = np.asarray(v)
    n = v.shape[0]
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    mat = v[(i - j) % n]
    return np.where(i >= j, mat, -mat)


def adjoint(a: np.ndarray) -> np.ndarray:
    """Image of a under x -> x^(-1) = -x^(n-1); satisfies skew_circulant(a).T == skew_circulant(adjoint(a))."""
    a = np.asarray(a)
    out = np.empty_like(a)
    out[0] = a[0]
    out[1:] = -a[:0:-1]
    return out


def zeta_mul(u: np.ndarray) -> np.ndarray:
    """Multiply by 1 + x^(n/2)."""
    u = np.asarray(u)
    h = u.shape[-1] // 2
    return np.concatenate([u[..., :h] - u[..., h:], u[..., h:] + u[..., :h]], axis=-1)


def zeta_star_mul(u: np.ndarray) -> np.ndarray:
    """Multiply by 1 - x^(n/2)."""
    u = np.asarray(u)
    h = u.shape[-1] // 2
    return np.concatenate([u[..., :h] + u[..., h:], u[..., h:] - u[..., :h]], axis=-1)


def inf_norm(a: np.ndarray) -> int:
    return int(np.max(np.abs(np.asarray(a))))


def l2_norm(a: np.ndarray) -> float:
    """Euclidean norm of a coefficient vector or a stack of them (flattened)."""
    flat = np.asarray(a, dtype=np.float64).ravel()
    return float(np.sqrt(np.dot(flat, flat)))


def centered_mod_q(a: np.ndarray, q: int) -> np.ndarray:
    """Centered representative in [-(q-1)/2, (q-1)/2] for odd q."""
    half = (q - 1) // 2
    return (np.asarray(a) + half) % q - half


def centered_mod_2q(a: np.ndarray, q: int) -> np.ndarray:
    """Centered representative in (-q, q] modulo 2q."""
    return (np.asarray(a) + q - 1) % (2 * q) - (q - 1)


def ring_matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Product of an (m, k) matrix of ring elements with a k-vector of them.

    ``mat`` has shape (m, k, n), ``vec`` has shape (k, n); returns (m, n)
    with unreduced integer coefficients.
    """
    mat = np.asarray(mat)
    vec = np.asarray(vec)
    m, k, n = mat.shape
    if vec.shape != (k, n):
        raise DimensionError(f"matrix is {mat.shape}, vector is {vec.shape}")
    out = np.zeros((m, n), dtype=np.int64)
    for i in range(m):
        for j in range(k):
            out[i] += ring_mul(mat[i, j], vec[j])
    return out
