"""Scheme parameter sets: validation, built-in named sets, and file I/O.

Built-in sets cover the three proof-of-concept attack columns, the three
published module-variant parameter columns, a CI-scale attack set, and a
scaled-down module set whose covariance is positive definite (used by the
zero-correlation checks).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, asdict, replace

from ggcgs.ring import is_power_of_two

TAIL_FACTOR = 9.5  # tail multiplier used for the default q and B_z choices


class ParameterError(ValueError):
    """Invalid or inconsistent scheme parameters."""


def is_odd_prime(q: int) -> bool:
    if q < 3 or q % 2 == 0:
        return False
    f = 3
    while f * f <= q:
        if q % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class SchemeParams:
    """Public parameters of one scheme instance.

    ``d``, ``gamma`` and ``s_bound`` only apply to the module variant
    (``gamma`` is the signature norm bound there; the generic variant uses
    ``b_z``).
    """

    variant: str
    n: int
    k: int
    m: int
    q: int
    eta: int
    sigma: float
    sigma_u: float
    b_s: float
    b_z: float
    omega: float = 3.8905
    d: int = 0
    gamma: float = 0.0
    s_bound: float = 0.0

    def __post_init__(self):
        if self.variant not in ("generic", "module"):
            raise ParameterError(f"unknown variant {self.variant!r}")
        if not is_power_of_two(self.n):
            raise ParameterError(f"n={self.n} is not a power of two")
        if self.k <= self.m + 1:
            raise ParameterError(f"need k > m + 1, got k={self.k}, m={self.m}")
        if not is_odd_prime(self.q):
            raise ParameterError(f"q={self.q} is not an odd prime")
        if self.sigma_u <= 0 or self.sigma <= 0:
            raise ParameterError("sigma and sigma_u must be positive")
        if self.variant == "generic" and self.sigma <= self.sigma_u:
            raise ParameterError("generic variant needs sigma > sigma_u")
        if self.d not in (0, 1):
            raise ParameterError(f"d must be 0 or 1, got {self.d}")

    @property
    def norm_bound(self) -> float:
        """Acceptance bound on the signature 2-norm."""
        return self.gamma if self.variant == "module" else self.b_z

    @property
    def challenge_active(self) -> int:
        """Number of live challenge bits (upper half is forced to 0 for module)."""
        return self.n if self.variant == "generic" else self.n // 2

    def to_dict(self) -> dict:
        return asdict(self)


def sigma_z_max(n: int, eta: int, sigma: float, sigma_u: float) -> float:
    """Conservative per-coefficient signature std dev used for q and B_z defaults."""
    return math.sqrt(sigma**2 + 3.0 * sigma_u**2 * eta * (eta + 1) * n)


def default_q(n: int, eta: int, sigma: float, sigma_u: float) -> int:
    """Smallest odd prime above 2 * 9.5 * sigma_z_max, so coefficients never wrap mod 2q."""
    floor = 2.0 * TAIL_FACTOR * sigma_z_max(n, eta, sigma, sigma_u)
    q = int(math.floor(floor)) + 1
    if q % 2 == 0:
        q += 1
    while not is_odd_prime(q):
        q += 2
    return q


def default_b_s(n: int, k: int, eta: int) -> float:
    return math.sqrt(n * (1 + (k - 1) * eta**2)) + 3.0


def default_b_z(n: int, k: int, eta: int, sigma: float, sigma_u: float) -> float:
    return TAIL_FACTOR * math.sqrt(n * k) * sigma_z_max(n, eta, sigma, sigma_u)


@dataclass(frozen=True)
class ParamSet:
    """A named parameter set plus experiment defaults (seed, worker count)."""

    name: str
    params: SchemeParams
    seed: int = 1
    workers: int = 4


def _generic_set(name, n, k, m, eta, sigma, sigma_u, seed=1, workers=4) -> ParamSet:
    params = SchemeParams(
        variant="generic",
        n=n,
        k=k,
        m=m,
        q=default_q(n, eta, sigma, sigma_u),
        eta=eta,
        sigma=sigma,
        sigma_u=sigma_u,
        b_s=default_b_s(n, k, eta),
        b_z=default_b_z(n, k, eta, sigma, sigma_u),
    )
    return ParamSet(name=name, params=params, seed=seed, workers=workers)


def _module_set(name, n, q, s_bound, sigma_u, sigma, gamma, m, k, d, seed=1, workers=4) -> ParamSet:
    params = SchemeParams(
        variant="module",
        n=n,
        k=k,
        m=m,
        q=q,
        eta=1,
        sigma=sigma,
        sigma_u=sigma_u,
        b_s=0.0,
        b_z=gamma,
        d=d,
        gamma=gamma,
        s_bound=s_bound,
    )
    return ParamSet(name=name, params=params, seed=seed, workers=workers)


def builtin_param_sets() -> dict[str, ParamSet]:
    sets = [
        # Proof-of-concept attack columns (k=3, m=1 throughout).
        _generic_set("table2-col1", n=64, k=3, m=1, eta=1, sigma=15.0, sigma_u=1.0),
        _generic_set("table2-col2", n=128, k=3, m=1, eta=1, sigma=9.5, sigma_u=0.4),
        _generic_set("table2-col3", n=128, k=3, m=1, eta=1, sigma=24.0, sigma_u=1.0),
        # Seconds-scale attack target for CI.
        _generic_set("ci-n16", n=16, k=3, m=1, eta=1, sigma=8.0, sigma_u=1.0),
        # Published module-variant parameters (names carry the claimed security level).
        _module_set("table3-120", n=256, q=64513, s_bound=82.74, sigma_u=14.22,
                    sigma=664.18, gamma=31972.19, m=3, k=7, d=1),
        _module_set("table3-180", n=256, q=50177, s_bound=90.65, sigma_u=14.22,
                    sigma=727.68, gamma=39405.92, m=4, k=9, d=1),
        _module_set("table3-256", n=256, q=202753, s_bound=79.75, sigma_u=14.22,
                    sigma=640.14, gamma=38437.36, m=4, k=11, d=0),
        # Scaled-down module set with a positive-definite covariance, for
        # the zero-correlation checks.  gamma is ~10x the expected signature
        # norm so honest signatures pass the norm check.
        _module_set("module-scaled", n=64, q=571, s_bound=0.0, sigma_u=1.0,
                    sigma=30.0, gamma=4157.0, m=1, k=3, d=0),
    ]
    return {ps.name: ps for ps in sets}


_PARAMSET_FIELDS = {"params", "seed", "workers"}
_PARAM_FIELDS = {f for f in SchemeParams.__dataclass_fields__}


def paramset_to_dict(ps: ParamSet) -> dict:
    return {"params": ps.params.to_dict(), "seed": ps.seed, "workers": ps.workers}


def paramset_from_dict(name: str, data: dict) -> ParamSet:
    unknown = set(data) - _PARAMSET_FIELDS
    if unknown:
        raise ParameterError(f"unknown keys in parameter set {name!r}: {sorted(unknown)}")
    raw = data.get("params")
    if not isinstance(raw, dict):
        raise ParameterError(f"parameter set {name!r} has no 'params' object")
    unknown = set(raw) - _PARAM_FIELDS
    if unknown:
        raise ParameterError(f"unknown parameter fields in {name!r}: {sorted(unknown)}")
    missing = {"variant", "n", "k", "m", "q", "eta", "sigma", "sigma_u", "b_s", "b_z"} - set(raw)
    if missing:
        raise ParameterError(f"parameter set {name!r} is missing fields: {sorted(missing)}")
    params = SchemeParams(**raw)
    return ParamSet(name=name, params=params, seed=int(data.get("seed", 1)),
                    workers=int(data.get("workers", 4)))


def load_param_file(path: str) -> dict[str, ParamSet]:
    """Load named parameter sets from a JSON file ({name: {params: ..., seed: ..., workers: ...}})."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ParameterError("parameter file must be a JSON object of named sets")
    return {name: paramset_from_dict(name, entry) for name, entry in data.items()}


def save_param_file(path: str, sets: dict[str, ParamSet]) -> None:
    data = {name: paramset_to_dict(ps) for name, ps in sets.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_param_set(name_or_path: str) -> ParamSet:
    """Look up a built-in set by name, or load a single-set JSON file."""
    builtins = builtin_param_sets()
    if name_or_path in builtins:
        return builtins[name_or_path]
    if os.path.exists(name_or_path):
        sets = load_param_file(name_or_path)
        if len(sets) != 1:
            raise ParameterError(
                f"{name_or_path} defines {len(sets)} sets; use a built-in name or a single-set file"
            )
        return next(iter(sets.values()))
    raise ParameterError(f"unknown parameter set {name_or_path!r}")


def params_digest(params: SchemeParams) -> str:
    """Stable digest of the parameter values, embedded in serialized artifacts."""
    blob = json.dumps(params.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def with_seed(ps: ParamSet, seed: int | None) -> ParamSet:
    return ps if seed is None else replace(ps, seed=seed)
