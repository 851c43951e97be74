"""FAB1 binary format for ciphertexts and keys.

Layout (little-endian throughout)::

    magic "FAB1" | u32 version | u32 kind
    params: u64 N, u64 logq, u64 L, u64 dnum, u64 fftIter, f64 delta
    extra params: u64 n_slots, u64 ext_limbs, u64 logq0, u64 logp, u64 shifts   (0 = default)
    body (kind specific), residues limb-major as u64 words

A switching key stored compressed carries its 32-byte seed in place of the
``a`` rows, which are re-expanded on load.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .ckks import Ciphertext, PublicKey, SecretKey
from .keyswitch import SwitchingKey, expand_a
from .ntt import Poly
from .params import SchemeParams

MAGIC = b"FAB1"
VERSION = 1
KINDS = {"ciphertext": 1, "switching_key": 2, "public_key": 3, "secret_key": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}

_HEAD = struct.Struct("<4sII")
_PARAMS = struct.Struct("<5Qd5Q")


class FormatError(ValueError):
    pass


class BadMagic(FormatError):
    pass


class BadVersion(FormatError):
    pass


class Truncated(FormatError):
    pass


class ParamsMismatch(FormatError):
    pass


def _params_block(p: SchemeParams) -> bytes:
    return _PARAMS.pack(p.N, p.logq, p.L, p.dnum, p.fft_iter, float(p.delta),
                        p.n_slots or 0, p.ext_limbs or 0, p.logq0 or 0, p.logp or 0, p.shifts)


def _params_from(fields) -> SchemeParams:
    N, logq, L, dnum, fft, delta, n_slots, ext, logq0, logp, shifts = fields
    return SchemeParams(N=N, logq=logq, L=L, dnum=dnum, fft_iter=fft, delta=delta,
                        n_slots=n_slots or None, ext_limbs=ext or None, logq0=logq0 or None,
                        logp=logp or None, shifts=shifts)


def _same(a: SchemeParams, b: SchemeParams) -> bool:
    return _params_block(a) == _params_block(b)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise Truncated(f"need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def u64(self) -> int:
        return self.unpack(_U64)[0]

    def words(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<u8").reshape(shape).astype(np.uint64)


_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


def _words(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<u8").tobytes()


# ---------------------------------------------------------------- encode

def dumps(obj, params: SchemeParams) -> bytes:
    if isinstance(obj, Ciphertext):
        kind = "ciphertext"
        body = [_U64.pack(obj.level), _U64.pack(obj.n_slots), _F64.pack(obj.scale),
                _words(obj.a.data), _words(obj.b.data)]
    elif isinstance(obj, SwitchingKey):
        kind = "switching_key"
        tag = obj.tag.encode()
        limbs = obj.b[0].level
        body = [_U64.pack(obj.dnum), _U64.pack(limbs), bytes([1 if obj.compressed else 0]),
                obj.seed, _U64.pack(len(tag)), tag]
        if not obj.compressed:
            body += [_words(a.data) for a in obj.a]
        body += [_words(b.data) for b in obj.b]
    elif isinstance(obj, PublicKey):
        kind = "public_key"
        body = [_U64.pack(obj.a.level), _words(obj.a.data), _words(obj.b.data)]
    elif isinstance(obj, SecretKey):
        kind = "secret_key"
        body = [np.ascontiguousarray(obj.coeffs, dtype="<i8").tobytes()]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return b"".join([_HEAD.pack(MAGIC, VERSION, KINDS[kind]), _params_block(params)] + body)


def save(path, obj, params: SchemeParams) -> int:
    data = dumps(obj, params)
    Path(path).write_bytes(data)
    return len(data)


# ---------------------------------------------------------------- decode

def read_header(buf: bytes) -> tuple:
    """(kind name, SchemeParams) after magic and version checks."""
    r = _Reader(buf)
    if len(buf) < 4 or bytes(buf[:4]) != MAGIC:
        raise BadMagic("not a FAB1 file")
    _, version, kind = r.unpack(_HEAD)
    if version != VERSION:
        raise BadVersion(f"format version {version}, expected {VERSION}")
    if kind not in _KIND_NAMES:
        raise FormatError(f"unknown object kind {kind}")
    return _KIND_NAMES[kind], _params_from(r.unpack(_PARAMS)), r


def loads(buf: bytes, params: SchemeParams | None = None):
    """Returns (object, params).  With ``params`` given, a file written for others is rejected."""
    kind, fp, r = read_header(buf)
    if params is not None and not _same(params, fp):
        raise ParamsMismatch(f"file parameters {fp.describe()} differ from {params.describe()}")
    params = params or fp
    N = params.N
    if kind == "ciphertext":
        level, n_slots = r.u64(), r.u64()
        scale = r.unpack(_F64)[0]
        if not 1 <= level <= params.L + 1:
            raise FormatError("level out of range")
        mods = params.level_moduli(level)
        a = Poly(r.words((level, N)), mods)
        b = Poly(r.words((level, N)), mods)
        obj = Ciphertext(a, b, scale, params, n_slots)
    elif kind == "switching_key":
        dnum, limbs = r.u64(), r.u64()
        compressed = bool(r.take(1)[0])
        seed = bytes(r.take(32))
        tag = bytes(r.take(r.u64())).decode()
        mods = params.raised_moduli(params.L + 1)
        if limbs != len(mods):
            raise FormatError("key limb count does not match the parameters")
        if compressed:
            a_rows = [expand_a(seed, j, mods, N) for j in range(dnum)]
        else:
            a_rows = [Poly(r.words((limbs, N)), mods) for _ in range(dnum)]
        b_rows = [Poly(r.words((limbs, N)), mods) for _ in range(dnum)]
        obj = SwitchingKey(a_rows, b_rows, seed, tag, compressed)
    elif kind == "public_key":
        level = r.u64()
        mods = params.level_moduli(level)
        obj = PublicKey(Poly(r.words((level, N)), mods), Poly(r.words((level, N)), mods))
    else:
        coeffs = np.frombuffer(r.take(8 * N), dtype="<i8").astype(np.int64)
        obj = SecretKey.from_coeffs(coeffs, params)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes")
    return obj, params


def load(path, params: SchemeParams | None = None):
    return loads(Path(path).read_bytes(), params)
