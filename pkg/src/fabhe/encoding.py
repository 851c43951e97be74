"""Canonical-embedding encode/decode for n <= N/2 slots.

A vector of n slots lives in the subring Z[Y], Y = X^(N/2n).  Slot j is the
evaluation at xi^(5^j) where xi = exp(i*pi/2n) is a primitive 4n-th root,
so rotation by k is the automorphism X -> X^(5^k).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ntt import Poly
from .rns import crt_array


@dataclass
class CleartextVector:
    values: np.ndarray
    scale: float

    def __post_init__(self):
        n = len(self.values)
        if n < 1 or n & (n - 1):
            raise ValueError("slot count must be a power of two")


@lru_cache(maxsize=None)
def slot_positions(n: int):
    """Index t with 2t+1 = 5^j mod 4n for each slot j, and the same for the conjugates."""
    M = 4 * n
    g = np.array([pow(5, j, M) for j in range(n)], dtype=np.int64)
    pos = (g - 1) // 2
    conj = (M - g - 1) // 2
    pos.flags.writeable = False
    conj.flags.writeable = False
    return pos, conj


@lru_cache(maxsize=None)
def _twist(n: int) -> np.ndarray:
    t = np.exp(1j * np.pi * np.arange(2 * n) / (2 * n))
    t.flags.writeable = False
    return t


def embed_inverse(z: np.ndarray) -> np.ndarray:
    """Real coefficients c (length 2n) whose slots are z."""
    z = np.asarray(z, dtype=np.complex128)
    n = len(z)
    pos, conj = slot_positions(n)
    v = np.zeros(2 * n, dtype=np.complex128)
    v[pos] = z
    v[conj] = np.conj(z)
    c = np.fft.fft(v) / (2 * n) * np.conj(_twist(n))
    return c.real


def embed(c: np.ndarray) -> np.ndarray:
    """Slots of the subring polynomial with real coefficients c (length 2n)."""
    c = np.asarray(c, dtype=np.complex128)
    n = len(c) // 2
    v = np.fft.ifft(c * _twist(n)) * (2 * n)
    return v[slot_positions(n)[0]]


def round_coeffs(x: np.ndarray):
    x = np.rint(x)
    if np.max(np.abs(x), initial=0.0) < 2.0 ** 62:
        return x.astype(np.int64)
    return np.array([int(v) for v in x], dtype=object)


def encode(values, moduli, scale: float, N: int, ntt: bool = True) -> Poly:
    """Scaled, rounded inverse embedding reduced into every limb."""
    values = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    n = len(values)
    if n & (n - 1) or 2 * n > N:
        raise ValueError("need a power-of-two slot count n <= N/2")
    c = round_coeffs(embed_inverse(values) * scale)
    Q = 1
    for m in moduli:
        Q *= m.q
    if c.size and max(abs(int(c.max())), abs(int(c.min()))) * 2 >= Q:
        raise OverflowError("encoded coefficients exceed Q/2")
    gap = N // (2 * n)
    full = np.zeros(N, dtype=c.dtype)
    full[::gap] = c
    return Poly.from_ints(full, moduli, ntt=ntt)


def subring_coeffs(p: Poly, n: int) -> np.ndarray:
    """Signed integer coefficients on the n-slot subring (Python ints)."""
    p = p.to_coeff()
    gap = p.N // (2 * n)
    return crt_array(p.data[:, ::gap], p.moduli, centered=True)


def decode(p: Poly, n: int, scale: float) -> np.ndarray:
    c = subring_coeffs(p, n)
    return embed(np.array([float(v) for v in c]) / scale)
