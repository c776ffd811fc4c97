"""Scheme: key equation, signing/verification roundtrips, decomposition,
challenge hashing, and the module-variant forgery."""

import numpy as np
import pytest

from ggcgs.params import SchemeParams, builtin_param_sets
from ggcgs.ring import centered_mod_2q, l2_norm, ring_matvec, ring_mul, zeta_star_mul
from ggcgs.sampling import NotPositiveDefiniteError, build_covariance, worker_rng
from ggcgs.scheme import (
    Signature,
    decompose_b,
    forge_signature,
    hash_to_challenge,
    keygen,
    keygen_pd,
    random_challenge_signature,
    sign,
    verify,
)
from ggcgs import serialize

GEN = builtin_param_sets()["table2-col1"].params
CI = builtin_param_sets()["ci-n16"].params
MOD120 = builtin_param_sets()["table3-120"].params
MODSCALED = builtin_param_sets()["module-scaled"].params


def expected_key_target(params):
    """q * j^T mod 2q: the value A s^T must reduce to for any honest key."""
    target = np.zeros((params.m, params.n), dtype=np.int64)
    if params.variant == "generic":
        target[0, 0] = params.q
    else:
        e = np.zeros(params.n, dtype=np.int64)
        e[0] = 1
        target[0] = params.q * zeta_star_mul(e)
    return centered_mod_2q(target, params.q)


def test_generic_key_equation():
    rng = worker_rng(100)
    for _ in range(5):
        pk, sk = keygen(GEN, rng)
        got = centered_mod_2q(ring_matvec(pk.a, sk.s), GEN.q)
        assert np.array_equal(got, expected_key_target(GEN))


def test_generic_secret_support():
    rng = worker_rng(101)
    pk, sk = keygen(GEN, rng)
    assert sk.s[0, 0] == 1 and not sk.s[0, 1:].any()
    assert np.max(np.abs(sk.s[1:])) <= GEN.eta
    assert l2_norm(sk.s) < GEN.b_s


def test_module_key_equation():
    rng = worker_rng(102)
    pk, sk = keygen(MOD120, rng)
    got = centered_mod_2q(ring_matvec(pk.a, sk.s), MOD120.q)
    assert np.array_equal(got, expected_key_target(MOD120))


def test_module_d1_secret_block_is_large():
    rng = worker_rng(103)
    qbar = (MOD120.q - 1) // 2
    biggest = 0
    for _ in range(20):
        _, sk = keygen(MOD120, rng)
        biggest = max(biggest, int(np.max(np.abs(sk.s[MOD120.k - MOD120.m:]))))
    assert biggest >= 0.9 * qbar


def test_decompose_b_rules():
    b = np.array([5, 7, 6, 0, -5, -7])
    b0, b1 = decompose_b(b, 1)
    assert b0.tolist() == [4, 8, 0, 0, -4, -8]
    assert b1.tolist() == [1, -1, 6, 0, -1, 1]
    assert np.array_equal(b0 + b1, b)
    assert not (b0 % 2).any()
    z0, z1 = decompose_b(b, 0)
    assert not z0.any() and np.array_equal(z1, b)


def test_hash_deterministic_and_sensitive():
    rng = worker_rng(104)
    v = rng.integers(-GEN.q, GEN.q + 1, size=(GEN.m, GEN.n))
    c1 = hash_to_challenge(v, b"message", GEN)
    c2 = hash_to_challenge(v, b"message", GEN)
    assert np.array_equal(c1, c2)
    assert set(np.unique(c1)) <= {0, 1}
    diffs = 0
    for i in range(200):
        c3 = hash_to_challenge(v, b"message" + bytes([i]), GEN)
        diffs += int(not np.array_equal(c1, c3))
    assert diffs == 200  # collisions have probability ~2^-64


def test_hash_module_upper_half_zero():
    rng = worker_rng(105)
    v = rng.integers(-MOD120.q, MOD120.q + 1, size=(MOD120.m, MOD120.n))
    c = hash_to_challenge(v, b"m", MOD120)
    assert not c[MOD120.n // 2:].any()


def test_sign_verify_roundtrip_generic():
    rng = worker_rng(106)
    pk, sk, cov, _ = keygen_pd(GEN, rng)
    for i in range(10):
        msg = f"msg-{i}".encode()
        sig = sign(msg, pk, sk, GEN, rng, cov=cov)
        ok, reason = verify(msg, pk, sig, GEN)
        assert ok, reason


def test_sign_decomposes_linearly():
    # with the same stream, z - (2u+c) s reproduces y bit for bit; checked
    # indirectly: re-running sign with a cloned rng gives identical output
    rng1 = worker_rng(107)
    rng2 = worker_rng(107)
    pk, sk, cov, _ = keygen_pd(GEN, rng1)
    keygen_pd(GEN, rng2)
    s1 = sign(b"m", pk, sk, GEN, rng1, cov=cov)
    s2 = sign(b"m", pk, sk, GEN, rng2, cov=cov)
    assert np.array_equal(s1.z, s2.z) and np.array_equal(s1.c, s2.c)


def test_verify_rejects_tampering():
    rng = worker_rng(108)
    pk, sk, cov, _ = keygen_pd(GEN, rng)
    msg = b"payload"
    sig = sign(msg, pk, sk, GEN, rng, cov=cov)
    bad = Signature(z=sig.z.copy(), c=sig.c.copy())
    bad.z[1, 3] += 1
    ok, reason = verify(msg, pk, bad, GEN)
    assert not ok and reason == "hash-mismatch"
    ok, reason = verify(b"other", pk, sig, GEN)
    assert not ok and reason == "hash-mismatch"


def test_verify_norm_bound():
    rng = worker_rng(109)
    pk, sk, cov, _ = keygen_pd(GEN, rng)
    import dataclasses
    tight = dataclasses.replace(GEN, b_z=1.0)
    sig = sign(b"m", pk, sk, tight, rng, cov=cov)
    ok, reason = verify(b"m", pk, sig, tight)
    assert not ok and reason == "norm-exceeded"


def test_sign_raises_without_pd():
    rng = worker_rng(110)
    pk, sk = keygen(MOD120, rng)
    with pytest.raises(NotPositiveDefiniteError):
        sign(b"m", pk, sk, MOD120, rng)
    sig = sign(b"m", pk, sk, MOD120, rng, diag_fallback=True)
    ok, reason = verify(b"m", pk, sig, MOD120)
    assert not ok and reason == "norm-exceeded"  # hash passes, norm cannot


def test_module_scaled_roundtrip():
    rng = worker_rng(111)
    pk, sk, cov, _ = keygen_pd(MODSCALED, rng)
    sig = sign(b"m", pk, sk, MODSCALED, rng, cov=cov)
    ok, reason = verify(b"m", pk, sig, MODSCALED)
    assert ok, reason
    assert not sig.c[MODSCALED.n // 2:].any()


def test_random_challenge_signature_distribution_shape():
    rng = worker_rng(112)
    pk, sk, cov, _ = keygen_pd(CI, rng)
    sig = random_challenge_signature(pk, sk, CI, rng, cov=cov)
    assert sig.z.shape == (CI.k, CI.n)
    assert set(np.unique(sig.c)) <= {0, 1}


def test_z0_variance_matches_lemma():
    # V(z0 coefficients) = sigma^2 + 3 sigma_u^2 (the alpha* denominator)
    rng = worker_rng(113)
    pk, sk, cov, _ = keygen_pd(CI, rng)
    zs = np.array([random_challenge_signature(pk, sk, CI, rng, cov=cov).z[0] for _ in range(20000)])
    want = CI.sigma**2 + 3 * CI.sigma_u**2
    assert zs.var() == pytest.approx(want, rel=0.03)


def test_forgery_hash_consistent():
    rng = worker_rng(114)
    pk, sk = keygen(MOD120, rng)
    qbar = (MOD120.q - 1) // 2
    for i in range(3):
        msg = f"forged-{i}".encode()
        sig, info = forge_signature(pk, msg, MOD120, rng)
        assert info["diag_fallback"]
        assert info["s2_inf_norm"] <= qbar
        ok, reason = verify(msg, pk, sig, MOD120)
        assert not ok and reason == "norm-exceeded"  # hash equation holds
        # tampering the challenge breaks the hash equation
        bad = Signature(z=sig.z.copy(), c=sig.c.copy())
        bad.c[0] ^= 1
        ok, reason = verify(msg, pk, bad, MOD120)
        assert not ok and reason == "hash-mismatch"


def test_serialize_roundtrips(tmp_path):
    rng = worker_rng(115)
    pk, sk, cov, _ = keygen_pd(CI, rng)
    sig = sign(b"m", pk, sk, CI, rng, cov=cov)
    for obj, kind in ((pk, "public_key"), (sk, "secret_key"), (sig, "signature")):
        path = tmp_path / f"{kind}.json"
        serialize.save_json(str(path), obj, CI)
        loaded = serialize.load(str(path), kind, CI)
        bpath = tmp_path / f"{kind}.bin"
        serialize.save_binary(str(bpath), obj, CI)
        loaded_b = serialize.load(str(bpath), kind, CI)
        for attr in {"public_key": ["a"], "secret_key": ["s"], "signature": ["z", "c"]}[kind]:
            assert np.array_equal(getattr(loaded, attr), getattr(obj, attr))
            assert np.array_equal(getattr(loaded_b, attr), getattr(obj, attr))


def test_serialize_rejects_garbage(tmp_path):
    path = tmp_path / "sig.json"
    path.write_text('{"kind": "signature", "params_digest": "nope"}')
    with pytest.raises(serialize.SerializationError):
        serialize.load(str(path), "signature", CI)
    path.write_text("{truncated")
    with pytest.raises(serialize.SerializationError):
        serialize.load(str(path), "signature", CI)
