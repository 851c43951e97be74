"""Negacyclic NTT over Z_q[X]/(X^N + 1) and the limb-major polynomial container.

Forward and inverse share one iterative Cooley-Tukey routine: the input is
twisted by powers of psi (the 2N-th root), permuted to bit-reversed order and
run through log N radix-2 stages with omega = psi^2 (or its inverse).  Output
slot j holds p(psi^(2j+1)).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .rns import Modulus, OpCounter, qcol, vec_add, vec_mod_mul_wide, vec_mul, vec_neg, vec_sub


@lru_cache(maxsize=None)
def bitrev(N: int) -> np.ndarray:
    bits = N.bit_length() - 1
    idx = np.arange(N, dtype=np.int64)
    rev = np.zeros(N, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.flags.writeable = False
    return rev


@dataclass(frozen=True)
class TwiddleTable:
    """Per-modulus tables.

    ``forward[h + j]`` is the j-th twiddle of the stage with half-width h,
    so stages are read back to back; ``forward[0] = 1`` pads the length to N.
    """
    q: int
    N: int
    psi_pows: np.ndarray
    forward: np.ndarray
    inverse: np.ndarray
    post_scale: np.ndarray   # N^-1 * psi^-i
    n_inv: int


@lru_cache(maxsize=None)
def _table(q: int, N: int, psi: int) -> TwiddleTable:
    def powers(base, count):
        out = np.empty(count, dtype=object)
        acc = 1
        for i in range(count):
            out[i] = acc
            acc = acc * base % q
        return out

    omega = psi * psi % q
    omega_inv = pow(omega, -1, q)
    fwd = [1]
    inv = [1]
    h = 1
    while h < N:
        step = N // (2 * h)
        w, wi = pow(omega, step, q), pow(omega_inv, step, q)
        fwd.extend(powers(w, h))
        inv.extend(powers(wi, h))
        h *= 2
    n_inv = pow(N, -1, q)
    psi_inv = pow(psi, -1, q)
    post = powers(psi_inv, N) * n_inv % q
    arr = lambda v: np.array([int(t) for t in v], dtype=np.uint64)
    t = TwiddleTable(q, N, arr(powers(psi, N)), arr(fwd), arr(inv), arr(post), n_inv)
    for a in (t.psi_pows, t.forward, t.inverse, t.post_scale):
        a.flags.writeable = False
    return t


def twiddle_table(m: Modulus, N: int | None = None) -> TwiddleTable:
    N = m.N if N is None else N
    psi = m.ntt_root if N == m.N else pow(m.ntt_root, m.N // N, m.q)
    return _table(m.q, N, psi)


@lru_cache(maxsize=64)
def _stacked(qs: tuple, moduli: tuple, N: int):
    tabs = [twiddle_table(m, N) for m in moduli]
    pick = lambda name: np.stack([getattr(t, name) for t in tabs])
    return pick("psi_pows"), pick("forward"), pick("inverse"), pick("post_scale")


def _stages(X: np.ndarray, tw: np.ndarray, q4: np.ndarray) -> np.ndarray:
    l, N = X.shape
    h = 1
    while h < N:
        Y = X.reshape(l, N // (2 * h), 2, h)
        U = Y[:, :, 0, :]
        V = (Y[:, :, 1, :] * tw[:, None, h:2 * h]) % q4
        S = U + V
        S = np.where(S >= q4, S - q4, S)
        D = np.where(U >= V, U - V, U + (q4 - V))
        X = np.stack((S, D), axis=2).reshape(l, N)
        h *= 2
    return X


def _stages_wide(x: np.ndarray, tw: np.ndarray, m: Modulus) -> np.ndarray:
    N = x.shape[0]
    q = np.uint64(m.q)
    h = 1
    while h < N:
        Y = x.reshape(N // (2 * h), 2, h)
        U = Y[:, 0, :]
        V = vec_mod_mul_wide(np.ascontiguousarray(Y[:, 1, :]), tw[None, h:2 * h], m)
        S = U + V
        S = np.where(S >= q, S - q, S)
        D = np.where(U >= V, U - V, U + (q - V))
        x = np.stack((S, D), axis=1).reshape(N)
        h *= 2
    return x


def ntt_forward(limb: np.ndarray, m: Modulus, tw: TwiddleTable | None = None) -> np.ndarray:
    return ntt_batch(np.asarray(limb, dtype=np.uint64)[None, :], (m,), tw=tw)[0]


def ntt_inverse(limb: np.ndarray, m: Modulus, tw: TwiddleTable | None = None) -> np.ndarray:
    return ntt_batch(np.asarray(limb, dtype=np.uint64)[None, :], (m,), inverse=True, tw=tw)[0]


def ntt_batch(a: np.ndarray, moduli: Sequence[Modulus], inverse: bool = False,
              tw: TwiddleTable | None = None) -> np.ndarray:
    """Transform every row of ``a`` under its own modulus."""
    moduli = tuple(moduli)
    l, N = a.shape
    if l != len(moduli):
        raise ValueError("row/modulus count mismatch")
    if N & (N - 1) or any((m.q - 1) % (2 * N) for m in moduli):
        raise ValueError(f"N={N} not supported by these moduli")
    if tw is not None and tw.N != N:
        raise ValueError("twiddle table built for another N")
    rev = bitrev(N)
    if any(m.wide for m in moduli):
        out = np.empty_like(a)
        for i, m in enumerate(moduli):
            t = tw or twiddle_table(m, N)
            if inverse:
                x = _stages_wide(a[i][rev], t.inverse, m)
                out[i] = vec_mod_mul_wide(x, t.post_scale, m)
            else:
                x = vec_mod_mul_wide(a[i], t.psi_pows, m)
                out[i] = _stages_wide(x[rev], t.forward, m)
        return out
    if tw is not None:
        psi, fwd, inv, post = (t[None] for t in (tw.psi_pows, tw.forward, tw.inverse, tw.post_scale))
    else:
        psi, fwd, inv, post = _stacked(tuple(m.q for m in moduli), moduli, N)
    q2 = qcol(moduli)
    q4 = q2[:, :, None]
    if inverse:
        x = _stages(a[:, rev], inv, q4)
        return (x * post) % q2
    x = (a * psi) % q2
    return _stages(x[:, rev], fwd, q4)


class Poly:
    """Ring element as an (l, N) residue matrix; ``ntt`` marks evaluation form."""
    __slots__ = ("data", "moduli", "ntt")

    def __init__(self, data: np.ndarray, moduli: Sequence[Modulus], ntt: bool = True):
        self.data = data
        self.moduli = tuple(moduli)
        self.ntt = ntt

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def level(self) -> int:
        return len(self.moduli)

    def copy(self) -> "Poly":
        return Poly(self.data.copy(), self.moduli, self.ntt)

    @classmethod
    def zeros(cls, moduli, N: int, ntt: bool = True) -> "Poly":
        return cls(np.zeros((len(moduli), N), dtype=np.uint64), moduli, ntt)

    @classmethod
    def from_ints(cls, coeffs, moduli, ntt: bool = False) -> "Poly":
        """Signed integer coefficients (any size) reduced into each limb."""
        c = np.asarray(coeffs)
        if c.dtype == object:
            rows = [np.array([int(v) % m.q for v in c], dtype=np.uint64) for m in moduli]
            p = cls(np.stack(rows), moduli, False)
        else:
            c = c.astype(np.int64)
            q = qcol(moduli).astype(np.int64)
            p = cls((c[None, :] % q).astype(np.uint64), moduli, False)
        return p.to_ntt() if ntt else p

    def _check(self, other: "Poly"):
        if self.moduli != other.moduli or self.ntt != other.ntt:
            raise ValueError("operands live in different bases or representations")

    def __add__(self, other: "Poly") -> "Poly":
        self._check(other)
        return Poly(vec_add(self.data, other.data, self.moduli), self.moduli, self.ntt)

    def __sub__(self, other: "Poly") -> "Poly":
        self._check(other)
        return Poly(vec_sub(self.data, other.data, self.moduli), self.moduli, self.ntt)

    def __neg__(self) -> "Poly":
        return Poly(vec_neg(self.data, self.moduli), self.moduli, self.ntt)

    def __mul__(self, other: "Poly") -> "Poly":
        self._check(other)
        if not self.ntt:
            raise ValueError("pointwise product needs evaluation form")
        return Poly(vec_mul(self.data, other.data, self.moduli), self.moduli, True)

    def scale_by(self, col: np.ndarray) -> "Poly":
        """Multiply limb i by the constant col[i] (an (l, 1) uint64 column)."""
        return Poly(vec_mul(self.data, col, self.moduli), self.moduli, self.ntt)

    def limbs(self, idx) -> "Poly":
        if isinstance(idx, slice):
            return Poly(self.data[idx], self.moduli[idx], self.ntt)
        idx = list(idx)
        return Poly(self.data[idx], [self.moduli[i] for i in idx], self.ntt)

    def to_ntt(self, counter: OpCounter | None = None) -> "Poly":
        return poly_ntt(self, counter) if not self.ntt else self

    def to_coeff(self, counter: OpCounter | None = None) -> "Poly":
        return poly_intt(self, counter) if self.ntt else self

    def __eq__(self, other) -> bool:
        return (isinstance(other, Poly) and self.moduli == other.moduli and self.ntt == other.ntt
                and np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"Poly(l={self.level}, N={self.N}, {'eval' if self.ntt else 'coeff'})"


def poly_ntt(p: Poly, counter: OpCounter | None = None) -> Poly:
    if p.ntt:
        raise ValueError("already in evaluation form")
    if counter is not None:
        counter.ntt += p.level
    return Poly(ntt_batch(p.data, p.moduli), p.moduli, True)


def poly_intt(p: Poly, counter: OpCounter | None = None) -> Poly:
    if not p.ntt:
        raise ValueError("already in coefficient form")
    if counter is not None:
        counter.intt += p.level
    return Poly(ntt_batch(p.data, p.moduli, inverse=True), p.moduli, False)


def negacyclic_schoolbook(a: Sequence[int], b: Sequence[int], q: int) -> list:
    """O(N^2) reference product mod (X^N + 1, q)."""
    N = len(a)
    out = [0] * N
    for i in range(N):
        ai = int(a[i])
        if not ai:
            continue
        for j in range(N):
            k = i + j
            if k < N:
                out[k] += ai * int(b[j])
            else:
                out[k - N] -= ai * int(b[j])
    return [v % q for v in out]
