"""The convoluted Gaussian signature scheme: key generation, signing,
verification, and the module-variant forgery.

Signing draws the ephemeral vector y from the secret-shaped covariance
sigma^2 I - sigma_u^2 C C^T, hashes A y^T (mod 2q) with the message into a
binary challenge c, draws scalar noise u centered at -c/2 (generic) or at
-(1 - x^(n/2)) c / 2 (module), and outputs

    z = y + (2u + c) s        (generic)
    z = y + ((1 + x^(n/2)) u + c) s   (module)

with z kept as unreduced integers.  Verification recomputes the hash from
A z^T - q c j^T mod 2q and checks the 2-norm of z.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ggcgs.params import SchemeParams, ParameterError
from ggcgs.ring import (
    centered_mod_2q,
    centered_mod_q,
    l2_norm,
    ring_matvec,
    ring_mul,
    zeta_mul,
    zeta_star_mul,
)
from ggcgs.sampling import (
    CovarianceMatrix,
    NotPositiveDefiniteError,
    build_covariance,
    sample_challenge,
    sample_discrete_gaussian_vec,
    sample_multivariate_gaussian,
    sample_uniform_eta,
)

KEYGEN_MAX_TRIES = 1000


class KeygenInfeasibleError(Exception):
    """Key generation exhausted its retry budget."""


@dataclass
class SecretKey:
    """Secret s in R^k with s_0 = 1; stored as a (k, n) coefficient matrix."""

    s: np.ndarray


@dataclass
class PublicKey:
    """Verification matrix A in R_2q^(m x k), stored as (m, k, n) centered mod 2q.

    ``aux`` retains the structural pieces (b, or a/b0/b1) for audits; they
    are not needed to verify.
    """

    a: np.ndarray
    aux: dict = field(default_factory=dict)


@dataclass
class Signature:
    z: np.ndarray  # (k, n) unreduced integers
    c: np.ndarray  # (n,) bits


def _unit_poly(n: int) -> np.ndarray:
    e = np.zeros(n, dtype=np.int64)
    e[0] = 1
    return e


def _j_vector(params: SchemeParams) -> np.ndarray:
    """The public offset vector: (1, 0, ..., 0) generically, with the first
    entry replaced by 1 - x^(n/2) for the module variant."""
    j = np.zeros((params.m, params.n), dtype=np.int64)
    if params.variant == "generic":
        j[0, 0] = 1
    else:
        j[0] = zeta_star_mul(_unit_poly(params.n))
    return j


def decompose_b(b: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Split b into (b0, b1) with b0 + b1 = b.

    d=0 keeps b whole (b0 = 0).  d=1 peels off the nearest multiple of 4
    neighbour for odd entries, leaving b1 in {-1, 1} there and b1 = b on
    even entries.
    """
    b = np.asarray(b, dtype=np.int64)
    if d == 0:
        return np.zeros_like(b), b.copy()
    if d != 1:
        raise ParameterError(f"d must be 0 or 1, got {d}")
    b0 = np.zeros_like(b)
    b1 = b.copy()
    odd = (b % 2) == 1
    mod4_1 = odd & ((b % 4) == 1)
    mod4_3 = odd & ((b % 4) == 3)
    b0[mod4_1] = b[mod4_1] - 1
    b1[mod4_1] = 1
    b0[mod4_3] = b[mod4_3] + 1
    b1[mod4_3] = -1
    return b0, b1


def hash_to_challenge(v: np.ndarray, msg: bytes, params: SchemeParams) -> np.ndarray:
    """Deterministic challenge from (v, msg): SHAKE-256 over the fixed-width
    little-endian encoding of v's centered coefficients, bits taken LSB-first."""
    v = np.ascontiguousarray(np.asarray(v, dtype=np.int64))
    active = params.challenge_active
    data = v.astype("<i8").tobytes() + bytes(msg)
    digest = hashlib.shake_256(data).digest((active + 7) // 8)
    bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8), bitorder="little")[:active]
    c = np.zeros(params.n, dtype=np.int64)
    c[:active] = bits
    return c


def keygen(params: SchemeParams, rng: np.random.Generator) -> tuple[PublicKey, SecretKey]:
    if params.variant == "module":
        return _keygen_module(params, rng)
    n, k, m, q = params.n, params.k, params.m, params.q
    for _ in range(KEYGEN_MAX_TRIES):
        s1 = np.array([sample_uniform_eta(n, params.eta, rng) for _ in range(k - m - 1)])
        s2 = np.array([sample_uniform_eta(n, params.eta, rng) for _ in range(m)])
        s = np.vstack([_unit_poly(n)[None, :], s1, s2])
        if l2_norm(s) < params.b_s:
            break
    else:
        raise KeygenInfeasibleError(f"no secret within norm bound after {KEYGEN_MAX_TRIES} tries")
    half = (q - 1) // 2
    a0 = rng.integers(-half, half + 1, size=(m, k - m - 1, n), dtype=np.int64)
    b = centered_mod_q(ring_matvec(a0, s1) + s2, q)
    a = np.zeros((m, k, n), dtype=np.int64)
    a[:, 0] = -2 * b
    a[0, 0, 0] += q
    a[:, 1 : k - m] = 2 * a0
    for i in range(m):
        a[i, k - m + i, 0] = 2
    pk = PublicKey(a=centered_mod_2q(a, q), aux={"b": b})
    return pk, SecretKey(s=s)


def _keygen_module(params: SchemeParams, rng: np.random.Generator) -> tuple[PublicKey, SecretKey]:
    n, k, m, q = params.n, params.k, params.m, params.q
    half = (q - 1) // 2
    s1 = np.array([sample_uniform_eta(n, params.eta, rng) for _ in range(k - m - 1)])
    s2 = np.array([sample_uniform_eta(n, params.eta, rng) for _ in range(m)])
    avec = rng.integers(-half, half + 1, size=(m, n), dtype=np.int64)
    a0 = rng.integers(-half, half + 1, size=(m, k - m - 1, n), dtype=np.int64)
    b = centered_mod_q(avec + ring_matvec(a0, s1) + s2, q)
    b0, b1 = decompose_b(b, params.d)
    s = np.vstack([_unit_poly(n)[None, :], s1, s2 - b0])
    a = np.zeros((m, k, n), dtype=np.int64)
    a[:, 0] = 2 * (avec - b1)
    a[0, 0] += params.q * zeta_star_mul(_unit_poly(n))
    a[:, 1 : k - m] = 2 * a0
    for i in range(m):
        a[i, k - m + i, 0] = 2
    pk = PublicKey(a=centered_mod_2q(a, q), aux={"a": avec, "b0": b0, "b1": b1})
    return pk, SecretKey(s=s)


def keygen_pd(
    params: SchemeParams, rng: np.random.Generator, max_tries: int = KEYGEN_MAX_TRIES
) -> tuple[PublicKey, SecretKey, CovarianceMatrix, int]:
    """Key generation retried until the signing covariance is positive definite.

    Returns (pk, sk, covariance, tries).  A signer can only operate with a
    PD covariance, so experiment drivers use this to get a working key; the
    number of retries is reported alongside the results.
    """
    for tries in range(1, max_tries + 1):
        pk, sk = keygen(params, rng)
        cov = build_covariance(sk.s, params.sigma, params.sigma_u, params.variant)
        if cov.is_pd:
            return pk, sk, cov, tries
    raise NotPositiveDefiniteError(
        f"no positive-definite covariance in {max_tries} keygen attempts"
    )


def noise_centers(c: np.ndarray, params: SchemeParams) -> np.ndarray:
    """Per-coordinate centers of the scalar noise u for challenge c."""
    if params.variant == "generic":
        return -np.asarray(c, dtype=np.float64) / 2.0
    return -zeta_star_mul(np.asarray(c, dtype=np.float64)) / 2.0


def convolved_noise(u: np.ndarray, c: np.ndarray, params: SchemeParams) -> np.ndarray:
    """The multiplier w applied to the secret: 2u + c, or zeta*u + c for module."""
    if params.variant == "generic":
        return 2 * u + c
    return zeta_mul(u) + c


def sign(
    msg: bytes,
    pk: PublicKey,
    sk: SecretKey,
    params: SchemeParams,
    rng: np.random.Generator,
    cov: CovarianceMatrix | None = None,
    diag_fallback: bool = False,
) -> Signature:
    """Produce a signature (z, c).

    Raises NotPositiveDefiniteError when the secret-shaped covariance cannot
    be factored, unless ``diag_fallback`` substitutes the diagonal sigma^2 I
    (used by the invalidity and forgery experiments, and recorded by them).
    """
    n, k, q = params.n, params.k, params.q
    if cov is None:
        cov = build_covariance(sk.s, params.sigma, params.sigma_u, params.variant)
    if cov.is_pd:
        y = sample_multivariate_gaussian(cov, 0.0, rng).reshape(k, n)
    elif diag_fallback:
        y = np.rint(rng.standard_normal((k, n)) * params.sigma).astype(np.int64)
    else:
        raise NotPositiveDefiniteError("signing covariance is not positive definite")
    v = centered_mod_2q(ring_matvec(pk.a, y), q)
    c = hash_to_challenge(v, msg, params)
    u = sample_discrete_gaussian_vec(params.sigma_u, noise_centers(c, params), rng)
    w = convolved_noise(u, c, params)
    z = y + np.array([ring_mul(w, si) for si in sk.s])
    return Signature(z=z, c=c)


def verify(msg: bytes, pk: PublicKey, sig: Signature, params: SchemeParams) -> tuple[bool, str | None]:
    """Check a signature; returns (valid, reason) with reason one of
    None, 'hash-mismatch', 'norm-exceeded'."""
    q = params.q
    j = _j_vector(params)
    qcj = params.q * np.array([ring_mul(sig.c, ji) for ji in j])
    v = centered_mod_2q(ring_matvec(pk.a, sig.z) - qcj, q)
    if not np.array_equal(hash_to_challenge(v, msg, params), sig.c):
        return False, "hash-mismatch"
    if l2_norm(sig.z) > params.norm_bound:
        return False, "norm-exceeded"
    return True, None


def random_challenge_signature(
    pk: PublicKey,
    sk: SecretKey,
    params: SchemeParams,
    rng: np.random.Generator,
    cov: CovarianceMatrix | None = None,
) -> Signature:
    """Signature with c drawn uniformly instead of hashed.

    Statistically identical to honest signatures in every quantity the
    attack and the lemma checks consume (the challenge coefficients are
    i.i.d. uniform bits either way) and several times faster.
    """
    n, k = params.n, params.k
    if cov is None:
        cov = build_covariance(sk.s, params.sigma, params.sigma_u, params.variant)
    y = sample_multivariate_gaussian(cov, 0.0, rng).reshape(k, n)
    c = sample_challenge(n, params.challenge_active, rng)
    u = sample_discrete_gaussian_vec(params.sigma_u, noise_centers(c, params), rng)
    w = convolved_noise(u, c, params)
    z = y + np.array([ring_mul(w, si) for si in sk.s])
    return Signature(z=z, c=c)


def _halve_even_mod_2q(t: np.ndarray, q: int) -> np.ndarray:
    """Invert doubling mod 2q: t must be even in its (-q, q] representative."""
    t = centered_mod_2q(t, q)
    if np.any(t % 2 != 0):
        raise ValueError("value is not even mod 2q")
    return centered_mod_q(t // 2, q)


def forge_signature(
    pk: PublicKey,
    msg: bytes,
    params: SchemeParams,
    rng: np.random.Generator,
) -> tuple[Signature, dict]:
    """Forge a module-variant signature from the public key alone.

    The first public column is 2(a - b1) + qJ mod 2q; subtracting the known
    qJ and halving recovers abar = (a - b1) mod q.  Any small sbar1 together
    with sbar2 = -(abar + A0 sbar1) mod q then satisfies the verification
    key equation, so the forged signature passes the hash check (the norm
    check fails exactly as it does for honest keys at the published
    parameters).  Returns (signature, info) where info records whether the
    forged covariance needed the diagonal fallback.
    """
    if params.variant != "module":
        raise ParameterError("forgery targets the module variant")
    n, k, m, q = params.n, params.k, params.m, params.q
    qj = np.zeros((m, n), dtype=np.int64)
    qj[0] = q * zeta_star_mul(_unit_poly(n))
    abar = _halve_even_mod_2q(pk.a[:, 0] - qj, q)
    a0 = _halve_even_mod_2q(pk.a[:, 1 : k - m], q)
    s1 = np.array([sample_uniform_eta(n, params.eta, rng) for _ in range(k - m - 1)])
    s2 = centered_mod_q(-(abar + ring_matvec(a0, s1)), q)
    sk = SecretKey(s=np.vstack([_unit_poly(n)[None, :], s1, s2]))
    cov = build_covariance(sk.s, params.sigma, params.sigma_u, params.variant)
    sig = sign(msg, pk, sk, params, rng, cov=cov, diag_fallback=True)
    info = {"covariance_pd": cov.is_pd, "diag_fallback": not cov.is_pd,
            "s2_inf_norm": int(np.max(np.abs(s2)))}
    return sig, info
