"""RNS-CKKS: keys, encryption and homomorphic evaluation.

Every ciphertext carries its parameter set.  Multiplications rescale
automatically; additions bring operands to a common level and scale first.
Scales at each limb count follow ``SchemeParams.canonical_scales`` so a
product of two canonical ciphertexts is canonical again after rescaling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import encoding
from .keyswitch import KeySwitchPlan, SwitchingKey, gen_switching_key, key_switch
from .ntt import Poly, ntt_batch
from .params import SchemeParams, gaussian, ternary, uniform_poly
from .rns import vec_mul, vec_scalar_col, vec_sub

SCALE_RTOL = 1e-9


class NeedsBootstrap(RuntimeError):
    """Raised when an operation would run below the lowest level."""


class MissingKey(KeyError):
    pass


@dataclass
class SecretKey:
    coeffs: np.ndarray       # small signed integers
    poly: Poly               # evaluation form over every raised limb

    @classmethod
    def from_coeffs(cls, coeffs, params: SchemeParams) -> "SecretKey":
        return cls(np.asarray(coeffs, dtype=np.int64),
                   Poly.from_ints(coeffs, params.chain, ntt=True))

    def at(self, moduli_count: int) -> Poly:
        return self.poly.limbs(slice(0, moduli_count))


@dataclass
class PublicKey:
    a: Poly
    b: Poly


@dataclass
class Ciphertext:
    a: Poly
    b: Poly
    scale: float
    params: SchemeParams
    n_slots: int = 0

    def __post_init__(self):
        if not self.n_slots:
            self.n_slots = self.params.slots

    @property
    def level(self) -> int:
        return self.a.level

    def copy(self) -> "Ciphertext":
        return Ciphertext(self.a.copy(), self.b.copy(), self.scale, self.params, self.n_slots)

    def nbytes(self) -> int:
        return 2 * self.level * self.params.N * self.params.logq // 8


@dataclass
class KeySet:
    params: SchemeParams
    sk: SecretKey
    pk: PublicKey
    relin: SwitchingKey
    galois: dict = field(default_factory=dict)
    datapath: str = "modified"
    plan: KeySwitchPlan | None = None

    def galois_key(self, g: int) -> SwitchingKey:
        try:
            return self.galois[g]
        except KeyError:
            raise MissingKey(f"no switching key for Galois element {g}") from None

    def add_rotations(self, steps, rng: np.random.Generator | None = None, left: bool = False):
        rng = rng or np.random.default_rng()
        for k in steps:
            g = galois_left(k, self.params.N) if left else galois_right(k, self.params.N)
            if g not in self.galois and g != 1:
                self.galois[g] = _galois_key(self.params, self.sk, g, rng)

    def add_galois(self, elements, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng()
        for g in elements:
            if g not in self.galois and g != 1:
                self.galois[g] = _galois_key(self.params, self.sk, g, rng)


# ---------------------------------------------------------------- automorphisms

def galois_left(k: int, N: int) -> int:
    return pow(5, k % (N // 2), 2 * N)


def galois_right(k: int, N: int) -> int:
    return pow(5, (-k) % (N // 2), 2 * N)


def conj_element(N: int) -> int:
    return 2 * N - 1


@lru_cache(maxsize=None)
def automorph_index(g: int, N: int) -> np.ndarray:
    """out[j] = in[idx[j]] realizes X -> X^g on evaluation-form data."""
    if g % 2 == 0:
        raise ValueError("Galois element must be odd")
    j = np.arange(N, dtype=np.int64)
    idx = (g * j + (g - 1) // 2) & (N - 1)
    idx.flags.writeable = False
    return idx


def automorph(p: Poly, g: int) -> Poly:
    if not p.ntt:
        raise ValueError("automorph works on evaluation form")
    return Poly(p.data[:, automorph_index(g % (2 * p.N), p.N)], p.moduli, True)


def _galois_key(params, sk: SecretKey, g: int, rng) -> SwitchingKey:
    return gen_switching_key(params, automorph(sk.poly, g), sk.poly, rng, tag=f"galois:{g}")


# ---------------------------------------------------------------- keys

def keygen(params: SchemeParams, seed: int | None = 0, rotations=(), conjugate: bool = True,
           compressed: bool = True, datapath: str = "modified") -> KeySet:
    rng = np.random.default_rng(seed)
    N = params.N
    sk = SecretKey.from_coeffs(ternary(rng, N), params)
    qm = params.q_moduli
    a = uniform_poly(rng, qm, N)
    e = Poly.from_ints(gaussian(rng, N, params.sigma), qm, ntt=True)
    pk = PublicKey(a, e - a * sk.at(len(qm)))
    s2 = sk.poly * sk.poly
    relin = gen_switching_key(params, s2, sk.poly, rng, tag="relin", compressed=compressed)
    ks = KeySet(params, sk, pk, relin, datapath=datapath)
    ks.add_rotations(rotations, rng)
    if conjugate:
        ks.add_galois([conj_element(N)], rng)
    for k in ks.galois.values():
        k.compressed = compressed
    return ks


# ---------------------------------------------------------------- enc / dec

def encode(values, params: SchemeParams, level: int | None = None, scale: float | None = None,
           n_slots: int | None = None) -> Poly:
    level = params.L + 1 if level is None else level
    scale = params.canonical_scale(level) if scale is None else scale
    values = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    n = n_slots or params.slots
    if len(values) < n:
        values = np.resize(values, n) if len(values) > 1 else np.full(n, values[0])
    return encoding.encode(values, params.level_moduli(level), scale, params.N)


def encrypt(pt: Poly, pk: PublicKey, params: SchemeParams, scale: float,
            rng: np.random.Generator | None = None, n_slots: int | None = None) -> Ciphertext:
    if pt.level < 1:
        raise ValueError("cannot encrypt at level 0")
    rng = rng or np.random.default_rng()
    N = params.N
    moduli = pt.moduli
    u = Poly.from_ints(ternary(rng, N), moduli, ntt=True)
    e0 = Poly.from_ints(gaussian(rng, N, params.sigma), moduli, ntt=True)
    e1 = Poly.from_ints(gaussian(rng, N, params.sigma), moduli, ntt=True)
    l = pt.level
    pa, pb = pk.a.limbs(slice(0, l)), pk.b.limbs(slice(0, l))
    a = u * pa + e1
    b = u * pb + e0 + pt.to_ntt()
    return Ciphertext(a, b, scale, params, n_slots or params.slots)


def encrypt_values(values, keys: KeySet, level: int | None = None, scale: float | None = None,
                   rng=None, n_slots: int | None = None) -> Ciphertext:
    p = keys.params
    level = p.L + 1 if level is None else level
    scale = p.canonical_scale(level) if scale is None else scale
    n = n_slots or p.slots
    pt = encode(values, p, level, scale, n)
    return encrypt(pt, keys.pk, p, scale, rng, n)


def decrypt(ct: Ciphertext, sk: SecretKey) -> Poly:
    return ct.b + ct.a * sk.at(ct.level)


def decrypt_values(ct: Ciphertext, sk: SecretKey) -> np.ndarray:
    return encoding.decode(decrypt(ct, sk), ct.n_slots, ct.scale)


# ---------------------------------------------------------------- basic ops

def _same_scale(s1: float, s2: float) -> bool:
    return abs(s1 - s2) <= SCALE_RTOL * max(s1, s2)


def add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    c1, c2 = match(c1, c2)
    return Ciphertext(c1.a + c2.a, c1.b + c2.b, c1.scale, c1.params, c1.n_slots)


def sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    c1, c2 = match(c1, c2)
    return Ciphertext(c1.a - c2.a, c1.b - c2.b, c1.scale, c1.params, c1.n_slots)


def neg(c: Ciphertext) -> Ciphertext:
    return Ciphertext(-c.a, -c.b, c.scale, c.params, c.n_slots)


def add_many(cts) -> Ciphertext:
    cts = list(cts)
    out = cts[0]
    for c in cts[1:]:
        out = add(out, c)
    return out


def match(c1: Ciphertext, c2: Ciphertext):
    """Bring two ciphertexts to a common level and scale."""
    if c1.params.N != c2.params.N:
        raise ValueError("ring degree mismatch")
    if c1.level > c2.level:
        c1 = level_down(c1, c2.level, c2.scale)
    elif c2.level > c1.level:
        c2 = level_down(c2, c1.level, c1.scale)
    if not _same_scale(c1.scale, c2.scale):
        t = c1.level - 1
        if t < 1:
            raise NeedsBootstrap("no level left to align scales")
        s = c1.params.canonical_scale(t)
        c1, c2 = level_down(c1, t, s), level_down(c2, t, s)
    return c1, c2


def drop_limbs(c: Ciphertext, level: int) -> Ciphertext:
    """Discard top limbs; value and scale are unchanged."""
    if level > c.level:
        raise ValueError("cannot raise by dropping")
    if level == c.level:
        return c
    s = slice(0, level)
    return Ciphertext(c.a.limbs(s), c.b.limbs(s), c.scale, c.params, c.n_slots)


def rescale(c: Ciphertext) -> Ciphertext:
    if c.level < 2:
        raise NeedsBootstrap("rescale needs at least two limbs")
    q = c.a.moduli[-1].q
    return Ciphertext(_rescale_poly(c.a), _rescale_poly(c.b), c.scale / q, c.params, c.n_slots)


def _rescale_poly(p: Poly) -> Poly:
    last = p.moduli[-1]
    rest = p.moduli[:-1]
    r = ntt_batch(p.data[-1:], (last,), inverse=True)[0]
    ql = last.q
    neg = r > np.uint64(ql // 2)
    rows = []
    for m in rest:
        qi = np.uint64(m.q)
        x = r % qi
        off = np.uint64((m.q - ql % m.q) % m.q)
        rows.append(np.where(neg, (x + off) % qi, x))
    lift = ntt_batch(np.stack(rows), rest)
    inv = vec_scalar_col([pow(ql % m.q, -1, m.q) for m in rest], rest)
    return Poly(vec_mul(vec_sub(p.data[:-1], lift, rest), inv, rest), rest, True)


def _const_poly(value, c: Ciphertext, scale: float, moduli) -> Poly:
    """Plaintext for a scalar or slot vector at the given scale."""
    if np.ndim(value) == 0:
        v = complex(value)
        if v.imag == 0:
            k = int(round(v.real * scale))
            col = vec_scalar_col([k] * len(moduli), moduli)
            return col
        value = np.full(c.n_slots, v)
    vals = np.asarray(value, dtype=np.complex128)
    if len(vals) != c.n_slots:
        vals = np.resize(vals, c.n_slots)
    return encoding.encode(vals, moduli, scale, c.params.N)


def mult_const(c: Ciphertext, value, target_level: int | None = None,
               target_scale: float | None = None) -> Ciphertext:
    """Multiply by a scalar or slot vector, then rescale once.

    The plaintext scale is picked so the result lands at ``target_scale``
    (canonical by default) on ``target_level`` (one below by default).
    """
    t = c.level - 1 if target_level is None else target_level
    if t < 1:
        raise NeedsBootstrap("no level left")
    if t > c.level - 1:
        raise ValueError("target level must be below the input level")
    target_scale = c.params.canonical_scale(t) if target_scale is None else target_scale
    c = drop_limbs(c, t + 1)
    q_top = c.a.moduli[-1].q
    ps = q_top * target_scale / c.scale
    pt = _const_poly(value, c, ps, c.a.moduli)
    if isinstance(pt, Poly):
        a, b = c.a * pt, c.b * pt
    else:
        a, b = c.a.scale_by(pt), c.b.scale_by(pt)
    out = Ciphertext(a, b, c.scale * ps, c.params, c.n_slots)
    out = rescale(out)
    out.scale = target_scale
    return out


def mult_plain(c: Ciphertext, pt: Poly, pt_scale: float) -> Ciphertext:
    if pt.moduli != c.a.moduli:
        pt = Poly(pt.data[:c.level], c.a.moduli, pt.ntt)
    pt = pt.to_ntt()
    return rescale(Ciphertext(c.a * pt, c.b * pt, c.scale * pt_scale, c.params, c.n_slots))


def level_down(c: Ciphertext, level: int, scale: float | None = None) -> Ciphertext:
    scale = c.params.canonical_scale(level) if scale is None else scale
    if level == c.level and _same_scale(scale, c.scale):
        return c
    if level == c.level:
        raise ValueError("scale change needs a spare level")
    return mult_const(c, 1.0, level, scale)


def add_const(c: Ciphertext, value) -> Ciphertext:
    pt = _const_poly(value, c, c.scale, c.a.moduli)
    if isinstance(pt, Poly):
        return Ciphertext(c.a, c.b + pt, c.scale, c.params, c.n_slots)
    # a constant polynomial is constant in evaluation form too
    b = Poly(np.broadcast_to(pt, c.b.data.shape).copy(), c.b.moduli, True)
    return Ciphertext(c.a, c.b + b, c.scale, c.params, c.n_slots)


def _plan(keys: KeySet) -> KeySwitchPlan:
    if keys.plan is None:
        keys.plan = KeySwitchPlan(keys.params, keys.datapath)
    return keys.plan


def relinearize(d0: Poly, d1: Poly, d2: Poly, keys: KeySet) -> tuple:
    ka, kb = key_switch(d2, keys.relin, keys.params, _plan(keys))
    return d1 + ka, d0 + kb


def mult(c1: Ciphertext, c2: Ciphertext, keys: KeySet) -> Ciphertext:
    if c1.level != c2.level:
        c1, c2 = (level_down(c1, c2.level, c2.scale), c2) if c1.level > c2.level else \
            (c1, level_down(c2, c1.level, c1.scale))
    if c1.level < 2:
        raise NeedsBootstrap("ciphertext-ciphertext mult needs two limbs")
    d0 = c1.b * c2.b
    d1 = c1.a * c2.b + c1.b * c2.a
    d2 = c1.a * c2.a
    a, b = relinearize(d0, d1, d2, keys)
    return rescale(Ciphertext(a, b, c1.scale * c2.scale, c1.params, c1.n_slots))


def square(c: Ciphertext, keys: KeySet) -> Ciphertext:
    return mult(c, c, keys)


def apply_galois(c: Ciphertext, g: int, keys: KeySet) -> Ciphertext:
    g %= 2 * c.params.N
    if g == 1:
        return c
    ksk = keys.galois_key(g)
    a, b = automorph(c.a, g), automorph(c.b, g)
    ka, kb = key_switch(a, ksk, keys.params, _plan(keys))
    return Ciphertext(ka, b + kb, c.scale, c.params, c.n_slots)


def rotate(c: Ciphertext, k: int, keys: KeySet) -> Ciphertext:
    """Right rotation: slot j moves to slot j + k."""
    if k % c.n_slots == 0:
        return c
    return apply_galois(c, galois_right(k, c.params.N), keys)


def rotate_left(c: Ciphertext, k: int, keys: KeySet) -> Ciphertext:
    if k % c.n_slots == 0:
        return c
    return apply_galois(c, galois_left(k, c.params.N), keys)


def conjugate(c: Ciphertext, keys: KeySet) -> Ciphertext:
    return apply_galois(c, conj_element(c.params.N), keys)


def mult_monomial(c: Ciphertext, power: int) -> Ciphertext:
    """Multiply by X^power (exact, no level cost).  X^(N/2) multiplies every slot by i."""
    N = c.params.N
    mono = _monomial_eval(power % (2 * N), c.a.moduli, N)
    return Ciphertext(c.a * mono, c.b * mono, c.scale, c.params, c.n_slots)


@lru_cache(maxsize=64)
def _monomial_eval(power: int, moduli: tuple, N: int) -> Poly:
    coeffs = np.zeros(N, dtype=np.int64)
    coeffs[power % N] = -1 if power >= N else 1
    return Poly.from_ints(coeffs, moduli, ntt=True)


def mult_by_i(c: Ciphertext) -> Ciphertext:
    return mult_monomial(c, c.params.N // 2)
