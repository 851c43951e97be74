"""Prime-field and RNS arithmetic.

Scalar helpers work on Python ints.  The ``vec_*`` helpers work on uint64
numpy arrays shaped ``(limbs, N)`` with one modulus per row.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from sympy import isprime

MAX_BITS = 54
DEFAULT_SHIFTS = 6


def precompute_madd(q: int, shifts: int = DEFAULT_SHIFTS, bits: int | None = None) -> tuple:
    """Table of (i * 2^bits) mod q for i in 1 .. 2^shifts - 1.

    Equivalent to summing 2^(bits+j) mod q over the set bits j of i.
    """
    if not 1 <= shifts <= 8:
        raise ValueError("shifts must be in [1, 8]")
    bits = q.bit_length() if bits is None else bits
    return tuple((i << bits) % q for i in range(1, 1 << shifts))


@dataclass(frozen=True)
class Modulus:
    q: int
    ntt_root: int
    N: int
    index: int = 0
    shifts: int = DEFAULT_SHIFTS
    madd: tuple = field(default=(), repr=False, compare=False)

    @property
    def bits(self) -> int:
        return self.q.bit_length()

    @property
    def wide(self) -> bool:
        # products no longer fit in 64 bits
        return self.q >= (1 << 32)

    @property
    def madd_array(self) -> np.ndarray:
        return _madd_array(self.q, self.shifts)


@lru_cache(maxsize=None)
def _madd_array(q: int, shifts: int) -> np.ndarray:
    # leading 0 so a zero carry needs no branch
    t = np.array((0,) + precompute_madd(q, shifts), dtype=np.uint64)
    t.flags.writeable = False
    return t


def make_modulus(q: int, N: int, index: int = 0, shifts: int = DEFAULT_SHIFTS) -> Modulus:
    if not isprime(q) or (q - 1) % (2 * N):
        raise ValueError(f"{q} is not an NTT-friendly prime for N={N}")
    if q.bit_length() > MAX_BITS:
        raise ValueError("limb wider than 54 bits")
    return Modulus(q, find_root(q, N), N, index, shifts, precompute_madd(q, shifts))


def find_root(q: int, N: int) -> int:
    """Smallest-generator primitive 2N-th root of unity mod q."""
    e = (q - 1) // (2 * N)
    for x in range(2, q):
        psi = pow(x, e, q)
        if pow(psi, N, q) == q - 1:
            return psi
    raise ValueError("no primitive root")


def generate_modulus_chain(N: int, count: int, bit_width: int, shifts: int = DEFAULT_SHIFTS,
                           exclude: Sequence[int] = (), start_index: int = 0) -> list:
    """``count`` distinct primes q = 1 mod 2N of exactly ``bit_width`` bits, largest first."""
    if N < 2 or N & (N - 1):
        raise ValueError("N must be a power of two")
    if bit_width > MAX_BITS or count < 1:
        raise ValueError("bad chain request")
    step = 2 * N
    q = ((1 << bit_width) - 1) // step * step + 1
    lo = 1 << (bit_width - 1)
    skip = set(exclude)
    out = []
    while len(out) < count:
        if q < lo:
            raise ValueError(f"only {len(out)} primes of {bit_width} bits for N={N}")
        if q not in skip and isprime(q):
            out.append(make_modulus(q, N, start_index + len(out), shifts))
        q -= step
    return out


# ---------------------------------------------------------------- scalar ops

def mod_reduce(a: int, m: Modulus) -> int:
    """Shift-and-add reduction of a double-width value.

    The high half is folded in ``shifts``-bit chunks through the madd table
    and kept below 2^bits after each step, so any a < 2^(2*bits) works.
    """
    bits, s = m.bits, m.shifts
    if a < 0 or a >> (2 * bits):
        raise ValueError("input outside the double-width range")
    mask = (1 << bits) - 1
    hi, lo = a >> bits, a & mask
    count = 0
    while count < bits:
        sh = min(s, bits - count)
        hi <<= sh
        carry, hi = hi >> bits, hi & mask
        if carry:
            hi += m.madd[carry - 1]
        if hi > mask:
            hi -= m.q
        count += sh
    c = hi + lo
    while c >= m.q:
        c -= m.q
    return c


def mod_add(a: int, b: int, m: Modulus) -> int:
    c = a + b
    return c - m.q if c >= m.q else c


def mod_sub(a: int, b: int, m: Modulus) -> int:
    c = a - b
    return c + m.q if c < 0 else c


def mod_mul(a: int, b: int, m: Modulus) -> int:
    return mod_reduce(a * b, m)


# ---------------------------------------------------------------- vector ops

M27 = np.uint64((1 << 27) - 1)
M54 = np.uint64((1 << 54) - 1)


def wide_mul(a: np.ndarray, b: np.ndarray, bits: int):
    """Exact product of two < 2^54 arrays split at ``bits`` into (hi, lo)."""
    a0, a1 = a & M27, a >> np.uint64(27)
    b0, b1 = b & M27, b >> np.uint64(27)
    mid = a1 * b0 + a0 * b1
    low = a0 * b0 + ((mid & M27) << np.uint64(27))
    high = a1 * b1 + (mid >> np.uint64(27)) + (low >> np.uint64(54))
    low &= M54
    sh = np.uint64(bits)
    lo = low & np.uint64((1 << bits) - 1)
    hi = (high << np.uint64(54 - bits)) | (low >> sh)
    return hi, lo


def vec_reduce(hi: np.ndarray, lo: np.ndarray, m: Modulus) -> np.ndarray:
    """Array form of :func:`mod_reduce` on (hi, lo) halves, hi < 2^bits, lo < 2^bits."""
    bits, s = m.bits, m.shifts
    q = np.uint64(m.q)
    mask = np.uint64((1 << bits) - 1)
    table = m.madd_array
    A = hi.astype(np.uint64, copy=True)
    count = 0
    while count < bits:
        sh = min(s, bits - count)
        A <<= np.uint64(sh)
        carry = A >> np.uint64(bits)
        A &= mask
        A += table[carry]
        A -= np.where(A > mask, q, np.uint64(0))
        count += sh
    c = A + lo
    for _ in range(3):
        c -= np.where(c >= q, q, np.uint64(0))
    return c


def vec_mod_mul_wide(a: np.ndarray, b, m: Modulus) -> np.ndarray:
    b = np.broadcast_to(np.asarray(b, dtype=np.uint64), a.shape)
    hi, lo = wide_mul(a, b, m.bits)
    return vec_reduce(hi, lo, m)


def qcol(moduli: Sequence[Modulus]) -> np.ndarray:
    return _qcol(tuple(m.q for m in moduli))


@lru_cache(maxsize=None)
def _qcol(qs: tuple) -> np.ndarray:
    c = np.array(qs, dtype=np.uint64)[:, None]
    c.flags.writeable = False
    return c


def vec_add(a, b, moduli):
    q = qcol(moduli)
    c = a + b
    return np.where(c >= q, c - q, c)


def vec_sub(a, b, moduli):
    q = qcol(moduli)
    return np.where(a >= b, a - b, a + (q - b))


def vec_neg(a, moduli):
    q = qcol(moduli)
    return np.where(a == 0, a, q - a)


def vec_mul(a, b, moduli):
    """Row-wise modular product.  ``b`` may be an (l, N) array or an (l, 1) column."""
    if not any(m.wide for m in moduli):
        return (a * b) % qcol(moduli)
    b = np.broadcast_to(b, a.shape)
    return np.stack([vec_mod_mul_wide(a[i], b[i], m) for i, m in enumerate(moduli)])


def vec_scalar_col(values: Sequence[int], moduli) -> np.ndarray:
    """Per-limb constants reduced into each limb, as a column."""
    return np.array([int(v) % m.q for v, m in zip(values, moduli)], dtype=np.uint64)[:, None]


# ---------------------------------------------------------------- RNS basis

@dataclass
class OpCounter:
    ntt: int = 0
    intt: int = 0
    modmul: int = 0
    key_bytes: int = 0
    switches: int = 0

    def reset(self):
        self.ntt = self.intt = self.modmul = self.key_bytes = self.switches = 0


@dataclass(frozen=True)
class RnsBasis:
    moduli: tuple
    roles: tuple = ()

    def __post_init__(self):
        qs = [m.q for m in self.moduli]
        if len(set(qs)) != len(qs):
            raise ValueError("duplicate limb moduli")
        if not self.roles:
            object.__setattr__(self, "roles", ("original",) * len(qs))

    @property
    def Q(self) -> int:
        return prod_q(self.moduli)

    @property
    def Q_hat_inv(self) -> tuple:
        return _conv_consts(tuple(m.q for m in self.moduli), ())[0]

    def q_star_mod(self, targets: Sequence[Modulus]) -> np.ndarray:
        return _conv_consts(tuple(m.q for m in self.moduli), tuple(p.q for p in targets))[1]

    def __len__(self):
        return len(self.moduli)


def prod_q(moduli) -> int:
    out = 1
    for m in moduli:
        out *= m.q if isinstance(m, Modulus) else int(m)
    return out


@lru_cache(maxsize=256)
def _conv_consts(src: tuple, dst: tuple):
    Q = 1
    for q in src:
        Q *= q
    qtil = tuple(pow(Q // q % q, -1, q) for q in src)
    star = np.array([[(Q // q) % p for q in src] for p in dst], dtype=np.uint64).reshape(len(dst), len(src))
    qmod = np.array([Q % p for p in dst], dtype=np.uint64)[:, None]
    return qtil, star, qmod


def basis_convert(x: np.ndarray, src: Sequence[Modulus], dst: Sequence[Modulus],
                  counter: OpCounter | None = None, exact: bool = False,
                  centered: bool = False) -> np.ndarray:
    """Fast basis conversion of coefficient residues from ``src`` limbs to ``dst`` limbs.

    The scaled residues y_i = [x_i * Qtilde_i]_{q_i} are formed once and shared by
    every target, so l source limbs into k targets cost l*(k+1) limb products.
    Without ``exact`` the result may exceed the true value by u*Q, 0 <= u < l.
    ``exact`` removes u with a float estimate; ``centered`` picks the
    representative in (-Q/2, Q/2] instead of [0, Q).
    """
    src, dst = tuple(src), tuple(dst)
    if {m.q for m in src} & {m.q for m in dst}:
        raise ValueError("source and target limbs overlap")
    x = np.asarray(x, dtype=np.uint64)
    if x.ndim == 1:
        x = x[:, None]
    qtil, star, qmod = _conv_consts(tuple(m.q for m in src), tuple(m.q for m in dst))
    y = vec_mul(x, np.array(qtil, dtype=np.uint64)[:, None], src)
    l, k = len(src), len(dst)
    if counter is not None:
        counter.modmul += l + l * k
    out = _dot_mod(star, y, src, dst)
    if exact or centered:
        frac = sum(y[i].astype(np.float64) / m.q for i, m in enumerate(src))
        v = np.rint(frac) if centered else np.floor(frac)
        v = v.astype(np.uint64)
        for j, p in enumerate(dst):
            corr = vec_mul(v[None, :] % np.uint64(p.q), qmod[j:j + 1], (p,))[0]
            out[j] = vec_sub(out[j:j + 1], corr[None, :], (p,))[0]
        if counter is not None:
            counter.modmul += k
    return out


def _dot_mod(C: np.ndarray, y: np.ndarray, src, dst) -> np.ndarray:
    k, l = C.shape
    N = y.shape[1]
    out = np.zeros((k, N), dtype=np.uint64)
    pcol = qcol(dst)
    maxq = max(m.q for m in src)
    maxp = max(p.q for p in dst)
    if maxq < (1 << 32) and maxp < (1 << 32):
        chunk = max(1, ((1 << 64) - 1) // ((maxq - 1) * (maxp - 1) or 1))
        for s in range(0, l, chunk):
            part = (C[:, s:s + chunk] @ y[s:s + chunk]) % pcol
            out = vec_add(out, part, dst)
        return out
    for j, p in enumerate(dst):
        acc = np.zeros(N, dtype=np.uint64)
        for i in range(l):
            yi = y[i] % np.uint64(p.q)
            t = vec_mod_mul_wide(yi, np.uint64(C[j, i]), p)
            acc = vec_add(acc[None], t[None], (p,))[0]
        out[j] = acc
    return out


# ---------------------------------------------------------------- CRT oracle

def decompose(x: int, moduli) -> list:
    return [x % (m.q if isinstance(m, Modulus) else m) for m in moduli]


def crt_recombine(residues: Sequence[int], moduli) -> int:
    qs = [m.q if isinstance(m, Modulus) else int(m) for m in moduli]
    Q = prod_q(qs)
    total = 0
    for r, q in zip(residues, qs):
        Qi = Q // q
        total += int(r) * pow(Qi % q, -1, q) % q * Qi
    return total % Q


def crt_array(x: np.ndarray, moduli, centered: bool = True) -> np.ndarray:
    """Recombine every column of an (l, M) residue matrix into Python ints."""
    qs = [m.q for m in moduli]
    Q = prod_q(qs)
    qtil, _, _ = _conv_consts(tuple(qs), ())
    y = vec_mul(np.asarray(x, dtype=np.uint64), np.array(qtil, dtype=np.uint64)[:, None], moduli)
    total = np.zeros(y.shape[1], dtype=object)
    for i, q in enumerate(qs):
        total = total + y[i].astype(object) * (Q // q)
    total = total % Q
    if centered:
        total = np.where(total > Q // 2, total - Q, total)
    return total
