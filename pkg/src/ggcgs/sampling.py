"""Randomness sources: uniform secrets, challenge polynomials, shaped
multivariate Gaussians, exact integer Gaussians, and truncated Cauchy draws.

Conventions used throughout the workbench:

* The covariance-shaped ephemeral vector is drawn as a continuous
  multivariate normal (Cholesky transform) rounded coordinatewise to the
  nearest integer.  Rounding adds 1/12 to each marginal variance and leaves
  cross-covariances untouched at the sigma values in scope; tolerances in
  the verification suite account for this.
* The coordinatewise integer Gaussian (used for the ephemeral scalar noise)
  is sampled exactly by inverse-CDF over a truncated support, so its
  moments match the ideal distribution to within the discarded tail mass
  (< e^-72).  Plain rounding would inflate its variance by 1/12, which is
  large enough to break the moment identities the attack relies on.
* Worker streams are derived from a 64-bit seed and a stream id through
  numpy's SeedSequence spawn keys, giving documented independent PCG64
  streams with period 2^128.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ggcgs.ring import skew_circulant, zeta_mul


class NotPositiveDefiniteError(Exception):
    """The requested covariance has a non-positive eigenvalue."""


def worker_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Reproducible, statistically independent stream for one worker."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id,)))


def sample_uniform_eta(n: int, eta: int, rng: np.random.Generator) -> np.ndarray:
    """Ring element with i.i.d. coefficients uniform on [-eta, eta]."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return rng.integers(-eta, eta + 1, size=n, dtype=np.int64)


def sample_challenge(n: int, active: int, rng: np.random.Generator) -> np.ndarray:
    """Challenge polynomial: first ``active`` coefficients i.i.d. {0,1}, rest 0."""
    if active not in (n, n // 2):
        raise ValueError(f"active must be n or n/2, got {active} for n={n}")
    c = np.zeros(n, dtype=np.int64)
    c[:active] = rng.integers(0, 2, size=active, dtype=np.int64)
    return c


def sample_challenge_batch(n: int, active: int, rng: np.random.Generator, size: int) -> np.ndarray:
    c = np.zeros((size, n), dtype=np.int64)
    c[:, :active] = rng.integers(0, 2, size=(size, active), dtype=np.int64)
    return c


# Cholesky pivot threshold, relative to sigma^2: below this the matrix is
# treated as numerically indefinite even if the factorization succeeds.
_PIVOT_REL = 1e-9


@dataclass
class CovarianceMatrix:
    """Symmetric covariance with an optional cached Cholesky factor.

    ``chol`` is None exactly when the matrix failed the positive
    definiteness test; the factor is computed once per key and shared
    read-only by all workers.
    """

    dim: int
    matrix: np.ndarray
    chol: np.ndarray | None = None
    is_pd: bool = False
    sigma: float = 0.0

    @property
    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.matrix)


def build_covariance(s_blocks: np.ndarray, sigma: float, sigma_u: float, variant: str = "generic") -> CovarianceMatrix:
    """Signing covariance sigma^2 I - sigma_u^2 C C^T for secret s.

    ``C`` stacks the skew-circulant matrices of the k secret blocks (the
    blocks are first multiplied by 1 + x^(n/2) for the module variant).
    Positive definiteness is flagged, not raised: experiment drivers need
    to record failures rather than abort.
    """
    s_blocks = np.asarray(s_blocks)
    k, n = s_blocks.shape
    if variant == "module":
        s_blocks = zeta_mul(s_blocks)
    elif variant != "generic":
        raise ValueError(f"unknown variant {variant!r}")
    stack = np.vstack([skew_circulant(b) for b in s_blocks]).astype(np.float64)
    cov = sigma**2 * np.eye(n * k) - sigma_u**2 * (stack @ stack.T)
    out = CovarianceMatrix(dim=n * k, matrix=cov, sigma=float(sigma))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return out
    if np.min(np.diagonal(chol)) ** 2 <= _PIVOT_REL * sigma**2:
        return out
    out.chol = chol
    out.is_pd = True
    return out


def sample_multivariate_gaussian(
    cov: CovarianceMatrix, center: np.ndarray | float, rng: np.random.Generator
) -> np.ndarray:
    """One integer vector: center + L g, rounded coordinatewise."""
    return sample_multivariate_gaussian_batch(cov, center, rng, 1)[0]


def sample_multivariate_gaussian_batch(
    cov: CovarianceMatrix, center: np.ndarray | float, rng: np.random.Generator, size: int
) -> np.ndarray:
    if not cov.is_pd:
        raise NotPositiveDefiniteError("covariance has no Cholesky factor")
    g = rng.standard_normal((size, cov.dim))
    x = g @ cov.chol.T
    x += center
    return np.rint(x).astype(np.int64)


class DiscreteGaussianTable:
    """Exact sampler for the integer Gaussian with mass proportional to
    exp(-(x - center)^2 / (2 sigma^2)).

    Inverse-CDF over integers within ceil(12 sigma) + 2 of the center; the
    discarded tail mass is below e^-72.
    """

    def __init__(self, sigma: float, center: float):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.center = float(center)
        radius = int(math.ceil(12.0 * sigma)) + 2
        mid = int(round(center))
        self.support = np.arange(mid - radius, mid + radius + 1, dtype=np.int64)
        logw = -((self.support - center) ** 2) / (2.0 * sigma**2)
        w = np.exp(logw - logw.max())
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        cdf[-1] = 1.0
        self._cdf = cdf

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        return self.support[idx]

    def mean(self) -> float:
        pmf = np.diff(self._cdf, prepend=0.0)
        return float(np.dot(self.support, pmf))

    def variance(self) -> float:
        pmf = np.diff(self._cdf, prepend=0.0)
        mu = np.dot(self.support, pmf)
        return float(np.dot((self.support - mu) ** 2, pmf))


_table_cache: dict[tuple[float, float], DiscreteGaussianTable] = {}


def _table(sigma: float, center: float) -> DiscreteGaussianTable:
    key = (float(sigma), float(center))
    tab = _table_cache.get(key)
    if tab is None:
        tab = _table_cache[key] = DiscreteGaussianTable(sigma, center)
    return tab


def sample_discrete_gaussian_1d(sigma: float, center: float, rng: np.random.Generator) -> int:
    """One draw from the exact integer Gaussian with the given std dev and center."""
    return int(_table(sigma, center).sample(rng))


def sample_discrete_gaussian_vec(sigma: float, centers: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact integer Gaussian draws with a per-coordinate center.

    Groups coordinates by center value (signing only ever uses a handful of
    distinct centers) and fills each group from its table.  The group order
    is fixed by np.unique, so the draw sequence is reproducible.
    """
    centers = np.asarray(centers, dtype=np.float64)
    out = np.empty(centers.shape, dtype=np.int64)
    for value in np.unique(centers):
        mask = centers == value
        out[mask] = _table(sigma, value).sample(rng, int(mask.sum()))
    return out


def sample_truncated_cauchy(
    alpha: float, beta: float, L: float, rng: np.random.Generator, size=None
):
    """Inverse-CDF draw from the Cauchy(alpha, beta) law restricted to [alpha-L, alpha+L]."""
    if beta <= 0 or L <= 0:
        raise ValueError("beta and L must be positive")
    theta_max = math.atan(L / beta)
    theta = rng.uniform(-theta_max, theta_max, size)
    return alpha + beta * np.tan(theta)
