"""Key and signature serialization.

Canonical form is JSON with integer coefficient arrays and a parameter
digest; an optional raw binary form (fixed-width little-endian int64)
sits behind a flag.  Field order and array layout are documented here so
independent implementations can interoperate:

* public key: "a" is the m x k x n matrix, row-major, centered mod 2q
* secret key: "s" is the k x n matrix, block 0 first
* signature:  "z" is the k x n matrix of unreduced integers, "c" the n bits
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from ggcgs.params import SchemeParams, params_digest
from ggcgs.scheme import PublicKey, SecretKey, Signature

_MAGIC = b"GGCGS1\x00"


class SerializationError(ValueError):
    """Malformed or mismatched serialized artifact."""


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise SerializationError(message)


def public_key_to_dict(pk: PublicKey, params: SchemeParams) -> dict:
    return {
        "kind": "public_key",
        "params_digest": params_digest(params),
        "a": pk.a.tolist(),
        "aux": {key: np.asarray(val).tolist() for key, val in pk.aux.items()},
    }


def secret_key_to_dict(sk: SecretKey, params: SchemeParams) -> dict:
    return {
        "kind": "secret_key",
        "params_digest": params_digest(params),
        "s": sk.s.tolist(),
    }


def signature_to_dict(sig: Signature, params: SchemeParams) -> dict:
    return {
        "kind": "signature",
        "params_digest": params_digest(params),
        "z": sig.z.tolist(),
        "c": sig.c.tolist(),
    }


def _int_array(data: Any, shape: tuple[int, ...], what: str) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise SerializationError(f"{what}: not an integer array") from exc
    _check(arr.shape == shape, f"{what}: expected shape {shape}, got {arr.shape}")
    return arr


def _load_common(data: dict, kind: str, params: SchemeParams) -> None:
    _check(isinstance(data, dict), "artifact is not a JSON object")
    _check(data.get("kind") == kind, f"expected kind {kind!r}, got {data.get('kind')!r}")
    digest = params_digest(params)
    _check(
        data.get("params_digest") == digest,
        f"parameter digest mismatch: artifact {data.get('params_digest')}, expected {digest}",
    )


def public_key_from_dict(data: dict, params: SchemeParams) -> PublicKey:
    _load_common(data, "public_key", params)
    a = _int_array(data.get("a"), (params.m, params.k, params.n), "public key matrix")
    aux = {key: np.asarray(val, dtype=np.int64) for key, val in data.get("aux", {}).items()}
    return PublicKey(a=a, aux=aux)


def secret_key_from_dict(data: dict, params: SchemeParams) -> SecretKey:
    _load_common(data, "secret_key", params)
    s = _int_array(data.get("s"), (params.k, params.n), "secret key")
    _check(s[0, 0] == 1 and not s[0, 1:].any(), "secret block 0 must be the constant 1")
    return SecretKey(s=s)


def signature_from_dict(data: dict, params: SchemeParams) -> Signature:
    _load_common(data, "signature", params)
    z = _int_array(data.get("z"), (params.k, params.n), "signature z")
    c = _int_array(data.get("c"), (params.n,), "signature c")
    _check(bool(np.all((c == 0) | (c == 1))), "challenge coefficients must be bits")
    if params.variant == "module":
        _check(not c[params.n // 2 :].any(), "module challenge upper half must be zero")
    return Signature(z=z, c=c)


_TO_DICT = {"public_key": public_key_to_dict, "secret_key": secret_key_to_dict,
            "signature": signature_to_dict}
_FROM_DICT = {"public_key": public_key_from_dict, "secret_key": secret_key_from_dict,
              "signature": signature_from_dict}
_ARRAY_KEYS = {"public_key": ["a"], "secret_key": ["s"], "signature": ["z", "c"]}


def save_json(path: str, obj, params: SchemeParams) -> None:
    kind = _kind_of(obj)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_TO_DICT[kind](obj, params), fh)
        fh.write("\n")


def _kind_of(obj) -> str:
    if isinstance(obj, PublicKey):
        return "public_key"
    if isinstance(obj, SecretKey):
        return "secret_key"
    if isinstance(obj, Signature):
        return "signature"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_binary(path: str, obj, params: SchemeParams) -> None:
    """Raw form: magic, JSON header (without arrays) length-prefixed, then
    each array as little-endian int64 in documented order."""
    kind = _kind_of(obj)
    data = _TO_DICT[kind](obj, params)
    arrays = [np.asarray(data.pop(key), dtype=np.int64) for key in _ARRAY_KEYS[kind]]
    data.pop("aux", None)
    header = json.dumps(data, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        for arr in arrays:
            fh.write(arr.astype("<i8").tobytes())


def _load_binary_dict(path: str, params: SchemeParams) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    _check(blob.startswith(_MAGIC), "bad magic")
    off = len(_MAGIC)
    _check(len(blob) >= off + 4, "truncated header length")
    hlen = int.from_bytes(blob[off : off + 4], "little")
    off += 4
    _check(len(blob) >= off + hlen, "truncated header")
    try:
        data = json.loads(blob[off : off + hlen])
    except json.JSONDecodeError as exc:
        raise SerializationError("corrupt binary header") from exc
    off += hlen
    kind = data.get("kind")
    _check(kind in _ARRAY_KEYS, f"unknown kind {kind!r}")
    shapes = {
        "public_key": {"a": (params.m, params.k, params.n)},
        "secret_key": {"s": (params.k, params.n)},
        "signature": {"z": (params.k, params.n), "c": (params.n,)},
    }[kind]
    for key in _ARRAY_KEYS[kind]:
        shape = shapes[key]
        count = int(np.prod(shape))
        _check(len(blob) >= off + 8 * count, f"truncated array {key!r}")
        arr = np.frombuffer(blob[off : off + 8 * count], dtype="<i8").reshape(shape)
        data[key] = arr.tolist()
        off += 8 * count
    _check(off == len(blob), "trailing bytes after arrays")
    return data


def load(path: str, kind: str, params: SchemeParams):
    """Load an artifact from JSON or the raw binary form (sniffed by magic)."""
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
    if head == _MAGIC:
        data = _load_binary_dict(path, params)
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SerializationError(f"cannot parse {path}: {exc}") from exc
    return _FROM_DICT[kind](data, params)
