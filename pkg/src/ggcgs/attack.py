"""The ratio key-recovery attack.

Every accepted signature contributes the per-cell ratios z[i,j] / z[0,0]
(i >= 1).  The clamped sample mean of each cell converges to s[i,j] * a*,
where a* = 3 sigma_u^2 / (sigma^2 + 3 sigma_u^2), so rounding mean / a* to
the nearest admissible value recovers the secret coefficient.

The planner turns the scheme parameters into a truncation length, a
worst-cell success probability p*, and the signature-count estimate
1 / p*^2:

* sigma_z00^2 = sigma^2 + 3 sigma_u^2 and sigma_z^2 = sigma^2 +
  sigma_u^2 eta (eta + 1) n are the denominator/numerator std devs;
* for each candidate secret value s the ratio is Cauchy with location
  s * a* and scale beta(s) = (sigma_z / sigma_z00) sqrt(1 - rho(s)^2),
  rho(s) = 3 s sigma_u^2 / (sigma_z sigma_z00);
* scanning l over (2, 20] in steps of 0.01 with L = ceil(l sigma_z), the
  truncation length L* is the first L whose CLT sample requirement
  N_L = (omega sigma_L / (a*/2))^2 satisfies N_L e^(-l^2/2) < 1, where
  sigma_L^2 is the truncated-Cauchy variance at scale beta and length L;
* p(s) integrates the N(0, sigma_L*) density over (-a*/2, a*/2) and
  p* is its minimum over the candidate values.

Accumulation clamps ratios at L* / sigma_z00 (the ratio-space image of the
Z-space truncation length); the clamp keeps the running mean inside the
truncated regime the plan's variance describes and is recorded in every
report.  Disabling it is supported for studying the divergence of the raw
Cauchy mean.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
import time
from dataclasses import dataclass, asdict

import numpy as np

from ggcgs.params import ParamSet, SchemeParams, params_digest
from ggcgs.ring import skew_circulant
from ggcgs.sampling import (
    sample_challenge_batch,
    worker_rng,
    _table,
)
from ggcgs.scheme import SecretKey, keygen_pd, noise_centers, sign

# Stream id reserved for key generation so worker streams stay disjoint.
KEY_STREAM_ID = 0x7FFFFFFF

DEFAULT_BATCH = 16384
CHECKPOINT_EVERY = 1_000_000

# Budget multiplier applied to the planner's 1/p*^2 when the caller asks
# for an automatic signature count.  Two estimates give a comfortable CLT
# margin for exact full-key recovery at the executed clamp.
AUTO_PLAN_MULTIPLIER = 2.0


class PlannerInfeasibleError(Exception):
    """No truncation length in the scan grid satisfies the containment condition."""


class EmptyAccumulatorError(Exception):
    """Recovery was attempted on a cell with no accepted samples."""


def alpha_star(sigma: float, sigma_u: float) -> float:
    """Ratio-attack scale constant 3 sigma_u^2 / (sigma^2 + 3 sigma_u^2)."""
    if not sigma > sigma_u > 0:
        raise ValueError("need sigma > sigma_u > 0")
    return 3.0 * sigma_u**2 / (sigma**2 + 3.0 * sigma_u**2)


def cauchy_params_of_ratio(sigma_y: float, sigma_z: float, rho: float) -> tuple[float, float]:
    """Location and scale of the ratio Y/Z of centered correlated normals."""
    if sigma_y <= 0 or sigma_z <= 0:
        raise ValueError("standard deviations must be positive")
    if abs(rho) > 1:
        raise ValueError("correlation must lie in [-1, 1]")
    ratio = sigma_y / sigma_z
    return rho * ratio, ratio * math.sqrt(1.0 - rho**2)


def truncated_cauchy_variance(beta: float, L: float) -> float:
    """Variance beta*L / arctan(L/beta) - beta^2 of the symmetric truncation."""
    if beta <= 0 or L <= 0:
        raise ValueError("beta and L must be positive")
    return beta * L / math.atan(L / beta) - beta**2


def gaussian_tail_bound(t: float) -> float:
    """Upper bound (e^(-t^2) + e^(-t^2/2)) / 2 on Pr[|Z| > t sigma], valid for t > 2."""
    if t <= 2:
        raise ValueError("bound requires t > 2")
    return 0.5 * (math.exp(-(t**2)) + math.exp(-(t**2) / 2.0))


def required_samples(omega: float, sigma: float, d: float) -> float:
    """Sample count (omega sigma / d)^2 pinning the mean within d at confidence omega."""
    if sigma <= 0 or d <= 0:
        raise ValueError("sigma and d must be positive")
    return (omega * sigma / d) ** 2


def sigma_z00(params: SchemeParams) -> float:
    return math.sqrt(params.sigma**2 + 3.0 * params.sigma_u**2)


def sigma_z_typical(params: SchemeParams) -> float:
    """Std dev of the numerator cells with the secret block norm at its mean."""
    return math.sqrt(
        params.sigma**2 + params.sigma_u**2 * params.eta * (params.eta + 1) * params.n
    )


def _phi_central(half_width: float, sigma: float) -> float:
    """Probability mass of N(0, sigma^2) on (-half_width, half_width)."""
    return math.erf(half_width / (sigma * math.sqrt(2.0)))


@dataclass
class AttackPlan:
    """Planner output: truncation, per-value truncated spreads, and sample estimate."""

    omega: float
    alpha_star: float
    sigma_w0: float
    sigma_z00: float
    sigma_z: float
    l_star: float
    trunc_length: int
    clamp_ratio: float
    sigma_trunc: dict[int, float]
    n_worst: float
    p_star: float
    n_estimate: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sigma_trunc"] = {str(s): v for s, v in self.sigma_trunc.items()}
        return data


def make_plan(params: SchemeParams, omega: float | None = None) -> AttackPlan:
    """Build the attack plan for a generic parameter set."""
    if params.variant != "generic":
        raise ValueError("the ratio attack plans only target the generic variant")
    w = params.omega if omega is None else omega
    a_star = alpha_star(params.sigma, params.sigma_u)
    sz00 = sigma_z00(params)
    sz = sigma_z_typical(params)
    half = a_star / 2.0

    values = list(range(-params.eta, params.eta + 1))
    betas = {}
    for s in values:
        rho = 3.0 * s * params.sigma_u**2 / (sz * sz00)
        _, beta = cauchy_params_of_ratio(sz, sz00, rho)
        betas[s] = beta

    found = None
    for i in range(201, 2001):
        l = i / 100.0
        big_l = math.ceil(l * sz)
        n_worst = max(
            required_samples(w, math.sqrt(truncated_cauchy_variance(betas[s], big_l)), half)
            for s in values
        )
        if n_worst * math.exp(-(l**2) / 2.0) < 1.0:
            found = (l, big_l, n_worst)
            break
    if found is None:
        raise PlannerInfeasibleError("no l in (2, 20] satisfies the containment condition")
    l_star, trunc_length, n_worst = found

    sigma_trunc = {
        s: math.sqrt(truncated_cauchy_variance(betas[s], trunc_length)) for s in values
    }
    p_star = min(_phi_central(half, sigma_trunc[s]) for s in values)
    return AttackPlan(
        omega=w,
        alpha_star=a_star,
        sigma_w0=2.0 * params.sigma_u,
        sigma_z00=sz00,
        sigma_z=sz,
        l_star=l_star,
        trunc_length=trunc_length,
        clamp_ratio=trunc_length / sz00,
        sigma_trunc=sigma_trunc,
        n_worst=n_worst,
        p_star=p_star,
        n_estimate=1.0 / p_star**2,
    )


class RatioAccumulator:
    """Streaming per-cell sums of accepted ratio samples.

    Merging two accumulators adds them coordinatewise, so worker-private
    instances fold into one deterministic result when merged in a fixed
    order.
    """

    def __init__(self, k: int, n: int):
        self.k = k
        self.n = n
        self.sums = np.zeros((k - 1, n), dtype=np.float64)
        self.counts = np.zeros((k - 1, n), dtype=np.int64)
        self.rejected_zero = 0
        self.rejected_clamped = 0

    def update(self, z: np.ndarray, clamp: float | None = None) -> None:
        """Fold in one signature's z matrix (k, n)."""
        z = np.asarray(z)
        z00 = float(z[0, 0])
        if z00 == 0.0:
            self.rejected_zero += 1
            return
        r = z[1:].astype(np.float64) / z00
        if clamp is None:
            self.sums += r
            self.counts += 1
        else:
            keep = np.abs(r) <= clamp
            self.rejected_clamped += int((~keep).sum())
            self.sums[keep] += r[keep]
            self.counts += keep

    def update_batch(self, z00: np.ndarray, z_rest: np.ndarray, clamp: float | None = None) -> None:
        """Fold in a batch: z00 (B,), z_rest (B, k-1, n)."""
        nz = z00 != 0.0
        self.rejected_zero += int((~nz).sum())
        if not nz.any():
            return
        r = z_rest[nz] / z00[nz, None, None]
        if clamp is None:
            self.sums += r.sum(axis=0)
            self.counts += r.shape[0]
        else:
            keep = np.abs(r) <= clamp
            self.rejected_clamped += int(r.size - keep.sum())
            self.sums += np.where(keep, r, 0.0).sum(axis=0)
            self.counts += keep.sum(axis=0)

    def merge(self, other: "RatioAccumulator") -> None:
        self.sums += other.sums
        self.counts += other.counts
        self.rejected_zero += other.rejected_zero
        self.rejected_clamped += other.rejected_clamped

    def means(self) -> np.ndarray:
        if np.any(self.counts == 0):
            raise EmptyAccumulatorError("some cells have no accepted samples")
        return self.sums / self.counts


def recover(acc: RatioAccumulator, a_star: float, eta: int) -> tuple[np.ndarray, np.ndarray]:
    """Decide each secret coefficient from the accumulated means.

    A mean in [s a* - a*/2, s a* + a*/2) decides s (ties on the upper edge
    round up); decisions are clamped to [-eta, eta].  Margins measure the
    distance of each mean from its decided interval center in units of
    a*/2.
    """
    means = acc.means()
    guess = np.floor(means / a_star + 0.5)
    guess = np.clip(guess, -eta, eta).astype(np.int64)
    margins = np.abs(means - guess * a_star) / (a_star / 2.0)
    return guess, margins


class BatchSigner:
    """Vectorized signature generator for one key.

    Produces the exact distribution the signer emits, batched: y comes from
    the cached Cholesky factor (rounded), c from uniform challenge bits,
    u from the exact integer Gaussian tables, and z[i] = y[i] + w V_i^T
    with V_i the skew-circulant matrix of secret block i.  All arithmetic
    runs in float64 on exact integer values (magnitudes stay far below
    2^53).
    """

    def __init__(self, params: SchemeParams, s: np.ndarray, chol: np.ndarray):
        self.params = params
        self.s = np.asarray(s)
        self.chol_t = np.ascontiguousarray(chol.T)
        self.v_t = [
            np.ascontiguousarray(skew_circulant(si).astype(np.float64).T) for si in self.s[1:]
        ]
        self.tables = {
            value: _table(params.sigma_u, value)
            for value in ({0.0, -0.5} if params.variant == "generic" else {0.0, -0.5, 0.5})
        }

    def _noise(self, centers: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = np.empty(centers.shape, dtype=np.int64)
        for value in sorted(self.tables):
            mask = centers == value
            cnt = int(mask.sum())
            if cnt:
                u[mask] = self.tables[value].sample(rng, cnt)
        return u

    def batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """One batch of signatures' z matrices, shape (size, k, n) float64."""
        p = self.params
        n, k = p.n, p.k
        y = np.rint(rng.standard_normal((size, n * k)) @ self.chol_t).reshape(size, k, n)
        c = sample_challenge_batch(n, p.challenge_active, rng, size)
        centers = noise_centers(c, p)
        u = self._noise(centers, rng)
        w = (2 * u + c).astype(np.float64) if p.variant == "generic" else (
            np.concatenate([u[:, : n // 2] - u[:, n // 2 :], u[:, n // 2 :] + u[:, : n // 2]],
                           axis=1) + c
        ).astype(np.float64)
        z = np.empty((size, k, n), dtype=np.float64)
        z[:, 0] = y[:, 0] + w
        for i, vt in enumerate(self.v_t):
            z[:, i + 1] = y[:, i + 1] + w @ vt
        return z


def _restore_rng(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def _run_segment(
    params: SchemeParams,
    s: np.ndarray,
    chol: np.ndarray,
    count: int,
    rng_state: dict,
    clamp: float | None,
    batch_size: int,
) -> tuple[np.ndarray, np.ndarray, int, int, dict]:
    """Process ``count`` signatures from the given stream state.

    Returns the segment's accumulator arrays and the advanced stream state.
    Runs in the parent or in a worker process; the result is identical
    either way because each segment starts from an explicit RNG state and
    uses a fixed batch layout.
    """
    rng = _restore_rng(rng_state)
    signer = BatchSigner(params, s, chol)
    acc = RatioAccumulator(params.k, params.n)
    done = 0
    while done < count:
        size = min(batch_size, count - done)
        z = signer.batch(rng, size)
        acc.update_batch(z[:, 0, 0], z[:, 1:], clamp)
        done += size
    return acc.sums, acc.counts, acc.rejected_zero, acc.rejected_clamped, rng.bit_generator.state


@dataclass
class AttackReport:
    """Everything one attack run produced, JSON-serializable.

    ``wall_seconds`` is the only field excluded from the determinism
    fingerprint.
    """

    params_name: str
    params_digest: str
    seed: int
    workers: int
    source: str
    clamp_ratio: float | None
    signatures_used: int
    rejected_zero: int
    rejected_clamped: int
    accepted_min: int
    accepted_max: int
    recovered: list
    margins: list
    margin_max: float
    correct_cells: int | None
    total_cells: int
    recovered_exactly: bool | None
    keygen_pd_tries: int
    plan: dict
    wall_seconds: float

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        data = self.to_dict()
        data.pop("wall_seconds")
        return json.dumps(data, sort_keys=True)


def _split_quota(total: int, workers: int) -> list[int]:
    base, rem = divmod(total, workers)
    return [base + (1 if w < rem else 0) for w in range(workers)]


def _save_checkpoint(path, meta, accs, states, done):
    arrays = {
        "sums": np.stack([a.sums for a in accs]),
        "counts": np.stack([a.counts for a in accs]),
        "rejected": np.array([[a.rejected_zero, a.rejected_clamped] for a in accs], dtype=np.int64),
        "done": np.asarray(done, dtype=np.int64),
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
        "states": np.frombuffer(json.dumps([_state_jsonable(s) for s in states]).encode(), dtype=np.uint8),
    }
    tmp = f"{path}.tmp.npz"
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def _state_jsonable(state: dict) -> dict:
    out = {"bit_generator": state["bit_generator"], "has_uint32": state["has_uint32"],
           "uinteger": state["uinteger"]}
    out["state"] = {k: str(v) for k, v in state["state"].items()}
    return out


def _state_from_jsonable(data: dict) -> dict:
    return {
        "bit_generator": data["bit_generator"],
        "state": {k: int(v) for k, v in data["state"].items()},
        "has_uint32": data["has_uint32"],
        "uinteger": data["uinteger"],
    }


def load_checkpoint(path, k, n):
    blob = np.load(path)
    meta = json.loads(bytes(blob["meta"]).decode())
    states = [_state_from_jsonable(d) for d in json.loads(bytes(blob["states"]).decode())]
    accs = []
    for w in range(blob["sums"].shape[0]):
        acc = RatioAccumulator(k, n)
        acc.sums = blob["sums"][w].copy()
        acc.counts = blob["counts"][w].copy()
        acc.rejected_zero = int(blob["rejected"][w, 0])
        acc.rejected_clamped = int(blob["rejected"][w, 1])
        accs.append(acc)
    return meta, accs, states, blob["done"].tolist()


def _blas_single_thread_env():
    return {var: "1" for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")}


def run_attack(
    param_set: ParamSet,
    signatures: int | None = None,
    auto_plan: bool = False,
    workers: int | None = None,
    seed: int | None = None,
    clamp: bool = True,
    source: str = "uniform",
    batch_size: int = DEFAULT_BATCH,
    checkpoint_path: str | None = None,
    resume_path: str | None = None,
    parallel: bool | None = None,
) -> AttackReport:
    """Plan, generate, accumulate, recover.

    The signature source is a key generated from the seed's dedicated key
    stream (retried until its covariance is positive definite); each worker
    stream then generates and accumulates its quota independently, and the
    private accumulators merge in worker order, so a fixed (seed, workers)
    pair reproduces the report bit for bit regardless of how segments were
    scheduled or checkpointed.
    """
    params = param_set.params
    if source not in ("uniform", "hashed"):
        raise ValueError(f"unknown source {source!r}")
    seed = param_set.seed if seed is None else seed
    workers = param_set.workers if workers is None else workers
    plan = make_plan(params)
    if signatures is None:
        if not auto_plan:
            raise ValueError("pass a signature count or auto_plan=True")
        signatures = int(math.ceil(AUTO_PLAN_MULTIPLIER * plan.n_estimate))
    clamp_ratio = plan.clamp_ratio if clamp else None

    t0 = time.perf_counter()
    pk, sk, cov, pd_tries = keygen_pd(params, worker_rng(seed, KEY_STREAM_ID))

    quotas = _split_quota(signatures, workers)
    meta = {
        "params_digest": params_digest(params),
        "seed": seed,
        "workers": workers,
        "batch_size": batch_size,
        "clamp_ratio": clamp_ratio,
        "source": source,
    }
    if resume_path:
        ck_meta, accs, states, done = load_checkpoint(resume_path, params.k, params.n)
        if ck_meta != meta:
            raise ValueError("checkpoint does not match this run's configuration")
    else:
        accs = [RatioAccumulator(params.k, params.n) for _ in range(workers)]
        states = [worker_rng(seed, w).bit_generator.state for w in range(workers)]
        done = [0] * workers

    if source == "hashed":
        _run_hashed(params, pk, sk, cov, quotas, states, accs, done, clamp_ratio)
    else:
        seg = max(1, math.ceil(CHECKPOINT_EVERY / workers))
        use_pool = workers > 1 if parallel is None else parallel
        use_pool = use_pool and (os.cpu_count() or 1) > 1 and workers > 1
        pool = None
        if use_pool:
            saved = {k: os.environ.get(k) for k in _blas_single_thread_env()}
            os.environ.update(_blas_single_thread_env())
            ctx = __import__("multiprocessing").get_context("spawn")
            pool = concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, os.cpu_count() or 1), mp_context=ctx
            )
            for k, v in saved.items():
                if v is None:
                    os.environ.pop(k, None)
                else:
                    os.environ[k] = v
        try:
            while any(done[w] < quotas[w] for w in range(workers)):
                counts = [min(seg, quotas[w] - done[w]) for w in range(workers)]
                jobs = []
                for w in range(workers):
                    if counts[w] <= 0:
                        continue
                    args = (params, sk.s, cov.chol, counts[w], states[w], clamp_ratio, batch_size)
                    if pool is not None:
                        jobs.append((w, pool.submit(_run_segment, *args)))
                    else:
                        jobs.append((w, _run_segment(*args)))
                for w, res in jobs:
                    sums, cnts, rz, rc, state = res.result() if pool is not None else res
                    accs[w].sums += sums
                    accs[w].counts += cnts
                    accs[w].rejected_zero += rz
                    accs[w].rejected_clamped += rc
                    states[w] = state
                    done[w] += counts[w]
                if checkpoint_path:
                    _save_checkpoint(checkpoint_path, meta, accs, states, done)
        finally:
            if pool is not None:
                pool.shutdown()

    merged = RatioAccumulator(params.k, params.n)
    for acc in accs:
        merged.merge(acc)
    guess, margins = recover(merged, plan.alpha_star, params.eta)
    truth = sk.s[1:]
    correct = int(np.sum(guess == truth))
    total = guess.size
    wall = time.perf_counter() - t0
    return AttackReport(
        params_name=param_set.name,
        params_digest=params_digest(params),
        seed=seed,
        workers=workers,
        source=source,
        clamp_ratio=clamp_ratio,
        signatures_used=signatures,
        rejected_zero=merged.rejected_zero,
        rejected_clamped=merged.rejected_clamped,
        accepted_min=int(merged.counts.min()),
        accepted_max=int(merged.counts.max()),
        recovered=guess.tolist(),
        margins=margins.tolist(),
        margin_max=float(margins.max()),
        correct_cells=correct,
        total_cells=total,
        recovered_exactly=bool(correct == total),
        keygen_pd_tries=pd_tries,
        plan=plan.to_dict(),
        wall_seconds=wall,
    )


def _run_hashed(params, pk, sk, cov, quotas, states, accs, done, clamp_ratio):
    """Slow source: honest signing with per-signature hashing."""
    for w, quota in enumerate(quotas):
        rng = _restore_rng(states[w])
        for i in range(done[w], quota):
            msg = f"attack-w{w}-{i}".encode()
            sig = sign(msg, pk, sk, params, rng, cov=cov)
            accs[w].update(sig.z, clamp_ratio)
        states[w] = rng.bit_generator.state
        done[w] = quota


TABLE_CSV_COLUMNS = [
    "n", "eta", "sigma_u", "sigma", "sigma_w0", "sigma_z00",
    "alpha_star", "inv_p_star_sq", "signatures", "wall_seconds",
]


def report_csv_row(report: AttackReport, params: SchemeParams) -> dict:
    plan = report.plan
    return {
        "n": params.n,
        "eta": params.eta,
        "sigma_u": params.sigma_u,
        "sigma": params.sigma,
        "sigma_w0": plan["sigma_w0"],
        "sigma_z00": plan["sigma_z00"],
        "alpha_star": plan["alpha_star"],
        "inv_p_star_sq": plan["n_estimate"],
        "signatures": report.signatures_used,
        "wall_seconds": report.wall_seconds,
    }


def write_table_csv(path: str, rows: list[dict]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
