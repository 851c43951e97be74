"""CKKS bootstrapping for n-slot ciphertexts.

Pipeline: switch to a sparse secret at the bottom level, raise the modulus,
switch back, project onto the n-slot subring, CoeffToSlot (fftIter merged
FFT stages plus a conjugation split), EvalMod on the real and imaginary
halves, SlotToCoeff (fftIter stages).  Depth is 2*fftIter + 9.

Slot vectors after CoeffToSlot are in bit-reversed order; EvalMod is
slot-wise and SlotToCoeff consumes that order directly, so no permutation
is ever evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C

from . import ckks
from .ckks import Ciphertext, KeySet, SecretKey
from .encoding import encode as encode_poly
from .keyswitch import SwitchingKey, gen_switching_key, key_switch
from .ops import CkksOps
from .ntt import Poly, ntt_batch
from .params import SchemeParams, ternary

EVALMOD_DEPTH = 9


def boot_depth(fft_iter: int) -> int:
    return 2 * fft_iter + EVALMOD_DEPTH


# ---------------------------------------------------------------- diagonals

@lru_cache(maxsize=64)
def _pow5(count: int, m: int) -> np.ndarray:
    out = np.empty(max(count, 1), dtype=np.int64)
    v = 1
    for k in range(len(out)):
        out[k] = v
        v = v * 5 % m
    return out


def stage_diagonals(n: int, length: int) -> dict:
    """Radix-2 butterfly stage of the slot FFT as {left-rotation offset: diagonal}."""
    h = length // 2
    d0 = np.zeros(n, complex)
    dp = np.zeros(n, complex)
    dm = np.zeros(n, complex)
    t = np.arange(n)
    j = t % length
    lo = j < h
    jj = np.where(lo, j, j - h)
    zeta = np.exp(2j * np.pi * _pow5(h, 4 * length)[jj] / (4 * length))
    d0[lo] = 1
    dp[lo] = zeta[lo]
    dm[~lo] = 1
    d0[~lo] = -zeta[~lo]
    out: dict = {}
    for off, v in ((0, d0), (h % n, dp), ((-h) % n, dm)):
        out[off] = out.get(off, 0) + v
    return out


def inverse_stage_diagonals(n: int, length: int) -> dict:
    h = length // 2
    d0 = np.zeros(n, complex)
    dp = np.zeros(n, complex)
    dm = np.zeros(n, complex)
    t = np.arange(n)
    j = t % length
    lo = j < h
    jj = np.where(lo, j, j - h)
    zinv = np.exp(-2j * np.pi * _pow5(h, 4 * length)[jj] / (4 * length))
    d0[lo] = 0.5
    dp[lo] = 0.5
    dm[~lo] = 0.5 * zinv[~lo]
    d0[~lo] = -0.5 * zinv[~lo]
    out: dict = {}
    for off, v in ((0, d0), (h % n, dp), ((-h) % n, dm)):
        out[off] = out.get(off, 0) + v
    return out


def compose(A: dict, B: dict, n: int) -> dict:
    """Diagonals of A @ B."""
    out: dict = {}
    for a, da in A.items():
        for b, db in B.items():
            off = (a + b) % n
            out[off] = out.get(off, 0) + da * np.roll(db, -a)
    return {k: v for k, v in out.items() if np.max(np.abs(v)) > 1e-13}


def scale_diagonals(D: dict, s: complex) -> dict:
    return {k: v * s for k, v in D.items()}


def dense(D: dict, n: int) -> np.ndarray:
    M = np.zeros((n, n), complex)
    t = np.arange(n)
    for off, v in D.items():
        M[t, (t + off) % n] += v
    return M


def apply_clear(D: dict, z: np.ndarray) -> np.ndarray:
    return sum(v * np.roll(z, -off) for off, v in D.items())


def bitrev_perm(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    return np.array([int(format(i, f"0{bits}b")[::-1], 2) if bits else 0 for i in range(n)])


def embedding_matrix(n: int) -> np.ndarray:
    """V[j, k] = xi^(5^j k): maps c_lo + i c_hi to the slots."""
    xi = np.exp(1j * np.pi / (2 * n))
    return np.array([[xi ** (pow(5, j, 4 * n) * k % (4 * n)) for k in range(n)] for j in range(n)])


def split_stages(log_n: int, groups: int) -> list:
    groups = max(1, min(groups, log_n))
    base, extra = divmod(log_n, groups)
    sizes = [base + (1 if i < extra else 0) for i in range(groups)]
    out, s = [], 1
    for sz in sizes:
        out.append(list(range(s, s + sz)))
        s += sz
    return out


def signed_offset(off: int, n: int) -> int:
    return off - n if off > n // 2 else off


def bsgs_parts(offsets, n: int, n1: int):
    """(offset, giant, baby) with giant a multiple of n1 and giant + baby = signed offset."""
    for off in offsets:
        o = signed_offset(off, n)
        g = (o // n1) * n1
        yield off, g, o - g


def bsgs_cost(offsets, n: int, n1: int) -> tuple:
    """(distinct nonzero babies, distinct nonzero giants)."""
    o = np.fromiter(offsets, dtype=np.int64)
    o = np.where(o > n // 2, o - n, o)
    g = (o // n1) * n1
    b = np.unique(o - g)
    g = np.unique(g % n)
    return int(np.count_nonzero(b)), int(np.count_nonzero(g))


def choose_baby(offsets, n: int) -> int:
    # baby width minimising distinct rotations; ties go to more (hoistable) babies
    offsets = list(offsets)
    cands = [1 << k for k in range(n.bit_length())]
    return min(cands, key=lambda w: (sum(bsgs_cost(offsets, n, w)), -w))


def stage_offsets(n: int, length: int) -> set:
    h = length // 2
    return {0, h % n, (-h) % n}


def group_offsets(n: int, lengths) -> set:
    """Offsets a product of butterfly stages can touch (sumset of the stage offsets)."""
    out = {0}
    for length in lengths:
        out = {(a + b) % n for a in out for b in stage_offsets(n, length)}
    return out


@dataclass
class DiagonalPlan:
    """One merged linear-transform stage evaluated with baby-step giant-step."""
    diags: dict
    n: int
    n1: int = 0

    def __post_init__(self):
        if not self.n1:
            self.n1 = choose_baby(self.diags, self.n)

    def split(self):
        """{giant offset: {baby offset: diagonal pre-rotated right by the giant}}."""
        out: dict = {}
        for off, g, b in bsgs_parts(self.diags, self.n, self.n1):
            out.setdefault(g % self.n, {})[b] = np.roll(self.diags[off], g)
        return out

    def rotations(self) -> set:
        sp = self.split()
        babies = {b for inner in sp.values() for b in inner}
        return {r for r in babies | set(sp) if r % self.n}

    def matrix(self) -> np.ndarray:
        return dense(self.diags, self.n)


def linear_transform(ct: Ciphertext, plan: DiagonalPlan, keys: KeySet,
                     out_scale: float) -> Ciphertext:
    """Homomorphic M @ slots using one level; output carries ``out_scale``."""
    q_top = ct.a.moduli[-1].q
    ps = q_top * out_scale / ct.scale
    moduli = ct.a.moduli
    N = ct.params.N
    baby_cache: dict = {0: ct}
    total = None
    for g, inner in sorted(plan.split().items()):
        acc_a = acc_b = None
        for b, diag in sorted(inner.items()):
            if b not in baby_cache:
                baby_cache[b] = ckks.rotate_left(ct, b, keys)
            r = baby_cache[b]
            pt = encode_poly(diag, moduli, ps, N)
            ta, tb = r.a * pt, r.b * pt
            acc_a = ta if acc_a is None else acc_a + ta
            acc_b = tb if acc_b is None else acc_b + tb
        part = Ciphertext(acc_a, acc_b, ct.scale * ps, ct.params, ct.n_slots)
        part = ckks.rotate_left(part, g, keys)
        total = part if total is None else ckks.Ciphertext(total.a + part.a, total.b + part.b,
                                                          total.scale, ct.params, ct.n_slots)
    out = ckks.rescale(total)
    out.scale = out_scale
    return out


# ---------------------------------------------------------------- EvalMod

def arcsine_weights(order: int) -> list:
    """Taylor weights of arcsin(u) for odd powers up to ``order``."""
    w = []
    for m in range(1, order + 1, 2):
        k = (m - 1) // 2
        w.append(math.comb(2 * k, k) / (4 ** k * (2 * k + 1)))
    return w


def mod_target(x: np.ndarray, order: int = 1) -> np.ndarray:
    """Smooth stand-in for x - round(x): arcsin(sin(2 pi x)) / 2 pi truncated to ``order``."""
    s = np.sin(2 * np.pi * x)
    return sum(w * s ** (2 * i + 1) for i, w in enumerate(arcsine_weights(order))) / (2 * np.pi)


def evalmod_coeffs(K: float, degree: int, order: int = 1) -> np.ndarray:
    """Chebyshev interpolant on [-1, 1] of t -> mod_target(K t); only odd terms survive."""
    c = C.chebinterpolate(lambda t: mod_target(K * t, order), degree)
    c[0::2] = 0.0
    return c


@dataclass
class _Cheb:
    ops: object
    T: dict = field(default_factory=dict)

    def get(self, k: int):
        if k in self.T:
            return self.T[k]
        op = self.ops
        if k % 2 == 0:
            h = self.get(k // 2)
            t = op.add_const(op.mult(op.add(h, h), h), -1.0)
        else:
            a, b = self.get(k // 2 + 1), self.get(k // 2)
            t = op.sub(op.mult(op.add(a, a), b), self.get(1))
        self.T[k] = t
        return t


def _combine(terms: list, target: int, params: SchemeParams):
    """Sum of c_j * ct_j landing canonical at ``target`` with a single rescale."""
    s_t = params.canonical_scale(target)
    acc_a = acc_b = None
    ref = None
    for coef, ct in terms:
        ct = ckks.drop_limbs(ct, target + 1)
        q_top = ct.a.moduli[-1].q
        ps = q_top * s_t / ct.scale
        k = int(round(coef * ps))
        col = np.array([[k % m.q] for m in ct.a.moduli], dtype=np.uint64)
        ta, tb = ct.a.scale_by(col), ct.b.scale_by(col)
        acc_a = ta if acc_a is None else acc_a + ta
        acc_b = tb if acc_b is None else acc_b + tb
        ref = ct
    out = ckks.rescale(Ciphertext(acc_a, acc_b, ref.scale * (ref.a.moduli[-1].q * s_t / ref.scale),
                                  params, ref.n_slots))
    out.scale = s_t
    return out


def _cheb_split(c: np.ndarray, G: int):
    """c = r + T_G * s in the Chebyshev basis."""
    d = len(c) - 1
    r = np.array(c[:G], dtype=float)
    s = np.zeros(d - G + 1)
    for k in range(G, d + 1):
        if k == G:
            s[0] += c[k]
        else:
            s[k - G] += 2 * c[k]
            r[2 * G - k] -= c[k]
    return r, s


def _eval_rec(c: np.ndarray, target: int, ch: _Cheb, baby: int):
    c = np.trim_zeros(np.where(np.abs(c) < 1e-14, 0.0, c), "b")
    if len(c) == 0:
        return 0.0
    if len(c) == 1:
        return float(c[0])
    if len(c) <= baby:
        terms = [(c[j], ch.get(j)) for j in range(1, len(c)) if c[j] != 0]
        if not terms:
            return float(c[0])
        out = ch.ops.combine(terms, target)
        return ch.ops.add_const(out, c[0]) if c[0] else out
    G = 1 << (len(c) - 1).bit_length() - 1
    r, s = _cheb_split(c, G)
    op = ch.ops
    s_val = _eval_rec(s, target + 1, ch, baby)
    TG = op.level_down(ch.get(G), target + 1)
    if isinstance(s_val, float):
        prod = op.combine([(s_val, TG)], target)
    else:
        prod = op.mult(TG, s_val)
    r_val = _eval_rec(r, target, ch, baby)
    if isinstance(r_val, float):
        return op.add_const(prod, r_val) if r_val else prod
    return op.add(prod, r_val)


def eval_chebyshev(ct: Ciphertext, coeffs: np.ndarray, keys: KeySet, baby: int = 16) -> Ciphertext:
    """Evaluate sum c_k T_k(slots) with depth ceil(log2(deg + 1)) + 1."""
    return eval_chebyshev_on(CkksOps(keys), ct, coeffs, baby)


def eval_chebyshev_on(ops, ct, coeffs: np.ndarray, baby: int = 16):
    """Same as :func:`eval_chebyshev` on any evaluator (real or tracing)."""
    deg = len(coeffs) - 1
    depth = math.ceil(math.log2(deg + 1)) + 1
    target = ops.level(ct) - depth
    if target < 1:
        raise ckks.NeedsBootstrap("not enough levels for the polynomial")
    ch = _Cheb(ops, {1: ct})
    out = _eval_rec(np.asarray(coeffs, float), target, ch, baby)
    if isinstance(out, float):
        raise ValueError("constant polynomial")
    return out


# ---------------------------------------------------------------- config

@dataclass
class BootstrapConfig:
    params: SchemeParams
    K: float = 12.0
    degree: int = 255
    arcsine_order: int = 1
    sparse_h: int = 32
    baby: int = 16

    def __post_init__(self):
        n = self.params.slots
        self.n = n
        self.log_n = n.bit_length() - 1
        self.fft_iter = self.params.fft_iter
        if self.degree > 2 ** (EVALMOD_DEPTH - 1) - 1:
            raise ValueError("degree too large for depth 9")
        self.coeffs = evalmod_coeffs(self.K, self.degree, self.arcsine_order)
        self.packed = 4 * n <= self.params.N
        c2s, s2c = transform_plans(n, self.fft_iter, self.packed)
        self.c2s, self.s2c = list(c2s), list(s2c)

    @property
    def _q0(self) -> int:
        return self.params.chain[0].q

    @property
    def depth(self) -> int:
        return boot_depth(self.fft_iter)

    def level_out(self) -> int:
        return self.params.L + 1 - self.depth

    def left_rotations(self) -> set:
        rots = set()
        for p in self.c2s + self.s2c:
            rots |= p.rotations()
        return rots

    def subsum_elements(self) -> list:
        N, n = self.params.N, self.n
        gap = N // (2 * n)
        return [pow(5, n * (1 << i), 2 * N) for i in range(gap.bit_length() - 1)]

    def galois_elements(self) -> set:
        N = self.params.N
        els = {ckks.galois_left(r, N) for r in self.left_rotations()}
        els |= set(self.subsum_elements())
        els.add(ckks.conj_element(N))
        return els

    def poly_error(self, samples: int = 4001, rho: float = 2 ** -5) -> float:
        """Max |p(t) - (x - round x)| over x within rho of an integer in [-K, K]."""
        K = self.K
        ints = np.arange(-math.floor(K - rho), math.floor(K - rho) + 1)
        off = np.linspace(-rho, rho, 41)
        x = (ints[:, None] + off[None, :]).ravel()
        y = C.chebval(x / K, self.coeffs)
        return float(np.max(np.abs(y - (x - np.rint(x)))))


def _merge(stages: list, n: int) -> dict:
    """Product of stages listed in application order."""
    D = stages[0]
    for s in stages[1:]:
        D = compose(s, D, n)
    return D


def diagonals_of(M: np.ndarray, tol: float = 1e-13) -> dict:
    m = M.shape[0]
    t = np.arange(m)
    out = {}
    for off in range(m):
        d = M[t, (t + off) % m]
        if np.max(np.abs(d)) > tol:
            out[off] = d
    return out


def _split_halves(D: dict, n: int) -> dict:
    """2n-slot diagonals of v -> [Re(Mv), Im(Mv)] halves, before the conjugate fold.

    Applied to an n-slot vector seen in 2n slots (repeated twice) it yields
    A with A + conj(A) = [Re(Mv), Im(Mv)].
    """
    alpha = np.concatenate([np.full(n, 0.5), np.full(n, -0.5j)])
    out = {}
    for off, d in D.items():
        o = off - n if off > n // 2 else off
        out[o % (2 * n)] = alpha * np.tile(d, 2)
    return out


def _merge_halves(D: dict, n: int) -> dict:
    """2n real slots [x, y] -> M (x + i y), repeated in both halves."""
    G = np.zeros((2 * n, 2 * n), complex)
    t = np.arange(2 * n)
    tp = t % n
    for off, d in D.items():
        idx = (tp + off) % n
        G[t, idx] += d[tp]
        G[t, idx + n] += 1j * d[tp]
    return diagonals_of(G)


@lru_cache(maxsize=16)
def transform_plans(n: int, fft_iter: int, packed: bool = False) -> tuple:
    """(CoeffToSlot plans, SlotToCoeff plans).

    Unpacked: the last C2S group carries the 1/2 of the conjugate split.
    Packed (needs 2n <= N/2): the last C2S group writes real and imaginary
    parts to the two halves of a 2n-slot vector and the first S2C group
    reads them back, so a single EvalMod covers both.
    """
    groups = split_stages(n.bit_length() - 1, fft_iter)
    fwd = [_merge([stage_diagonals(n, 2 ** s) for s in g], n) for g in groups]
    inv = [_merge([inverse_stage_diagonals(n, 2 ** s) for s in g][::-1], n) for g in groups]
    # SlotToCoeff: groups applied first to last; C2S: inverses in reverse
    c2s = inv[::-1]
    if packed:
        c2s = [DiagonalPlan(d, n) for d in c2s[:-1]] + [DiagonalPlan(_split_halves(c2s[-1], n), 2 * n)]
        s2c = [DiagonalPlan(_merge_halves(fwd[0], n), 2 * n)] + [DiagonalPlan(d, n) for d in fwd[1:]]
        return tuple(c2s), tuple(s2c)
    c2s[-1] = scale_diagonals(c2s[-1], 0.5)
    return tuple(DiagonalPlan(d, n) for d in c2s), tuple(DiagonalPlan(d, n) for d in fwd)


@dataclass
class BootKeys:
    to_sparse: SwitchingKey
    from_sparse: SwitchingKey


def bootstrap_keygen(cfg: BootstrapConfig, keys: KeySet, seed: int = 0) -> BootKeys:
    """Adds Galois keys to ``keys`` and returns the sparse-secret encapsulation keys."""
    params = cfg.params
    rng = np.random.default_rng(seed)
    keys.add_galois(sorted(cfg.galois_elements()), rng)
    sp = SecretKey.from_coeffs(ternary(rng, params.N, cfg.sparse_h), params)
    to_sp = gen_switching_key(params, keys.sk.poly, sp.poly, rng, tag="to_sparse")
    from_sp = gen_switching_key(params, sp.poly, keys.sk.poly, rng, tag="from_sparse")
    return BootKeys(to_sp, from_sp)


# ---------------------------------------------------------------- pipeline

def _lift(p: Poly, moduli) -> Poly:
    """Centered lift of a single-limb polynomial to ``moduli`` (evaluation form)."""
    m0 = p.moduli[0]
    r = ntt_batch(p.data[:1], (m0,), inverse=True)[0]
    neg = r > np.uint64(m0.q // 2)
    rows = []
    for m in moduli:
        qi = np.uint64(m.q)
        x = r % qi
        off = np.uint64((m.q - m0.q % m.q) % m.q)
        rows.append(np.where(neg, (x + off) % qi, x))
    return Poly(ntt_batch(np.stack(rows), moduli), moduli, True)


def mod_raise(ct: Ciphertext) -> Ciphertext:
    """Reinterpret a one-limb ciphertext over the whole chain; the value becomes m + q_0 I."""
    if ct.level != 1:
        ct = ckks.drop_limbs(ct, 1)
    params = ct.params
    moduli = params.q_moduli
    return Ciphertext(_lift(ct.a, moduli), _lift(ct.b, moduli), ct.scale, params, ct.n_slots)


def _switch(ct: Ciphertext, ksk: SwitchingKey, keys: KeySet) -> Ciphertext:
    ka, kb = key_switch(ct.a, ksk, ct.params, ckks._plan(keys))
    return Ciphertext(ka, ct.b + kb, ct.scale, ct.params, ct.n_slots)


def subsum(ct: Ciphertext, cfg: BootstrapConfig, keys: KeySet) -> Ciphertext:
    """Trace onto the n-slot subring; multiplies subring coefficients by N/2n."""
    for g in cfg.subsum_elements():
        r = ckks.apply_galois(ct, g, keys)
        ct = Ciphertext(ct.a + r.a, ct.b + r.b, ct.scale, ct.params, ct.n_slots)
    return ct


def _stage_scales(start: float, end: float, steps: int) -> list:
    return [start * (end / start) ** ((i + 1) / steps) for i in range(steps)]


def coeff_to_slot(ct: Ciphertext, cfg: BootstrapConfig, keys: KeySet) -> tuple:
    """Slot-arranged t = x/K coefficients.

    Returns (real part, imaginary part), or a single 2n-slot ciphertext
    holding both halves when the configuration is packed.
    """
    params = ct.params
    steps = len(cfg.c2s)
    if ct.level - steps < 1:
        raise ckks.NeedsBootstrap("not enough levels for CoeffToSlot")
    end = params.canonical_scale(ct.level - steps)
    for plan, s in zip(cfg.c2s, _stage_scales(ct.scale, end, steps)):
        if plan.n != ct.n_slots:
            ct = Ciphertext(ct.a, ct.b, ct.scale, params, plan.n)
        ct = linear_transform(ct, plan, keys, s)
    cj = ckks.conjugate(ct, keys)
    if cfg.packed:
        return (ckks.add(ct, cj),)
    re = ckks.add(ct, cj)
    im = ckks.mult_monomial(ckks.sub(ct, cj), 3 * params.N // 2)
    return re, im


def eval_mod(ct: Ciphertext, cfg: BootstrapConfig, keys: KeySet) -> Ciphertext:
    return eval_chebyshev(ct, cfg.coeffs, keys, cfg.baby)


def slot_to_coeff(parts: tuple, cfg: BootstrapConfig, keys: KeySet, msg_scale: float) -> Ciphertext:
    """Map bit-reversed coefficients back to slots, times q0/msg_scale."""
    if len(parts) == 2:
        ct = ckks.add(parts[0], ckks.mult_by_i(parts[1]))
    else:
        ct = parts[0]
    params = ct.params
    gain = cfg._q0 / msg_scale
    for i, plan in enumerate(cfg.s2c):
        p = DiagonalPlan(scale_diagonals(plan.diags, gain), plan.n, plan.n1) if i == 0 else plan
        if p.n != ct.n_slots:
            ct = Ciphertext(ct.a, ct.b, ct.scale, params, p.n)
        ct = linear_transform(ct, p, keys, params.canonical_scale(ct.level - 1))
    if ct.n_slots != cfg.n:
        ct = Ciphertext(ct.a, ct.b, ct.scale, params, cfg.n)
    return ct


def bootstrap(ct: Ciphertext, cfg: BootstrapConfig, keys: KeySet, bkeys: BootKeys) -> Ciphertext:
    """Refresh a ciphertext; output has L + 1 - (2 fftIter + 9) limbs."""
    params = ct.params
    if ct.n_slots != cfg.n:
        raise ValueError("slot count differs from the bootstrap configuration")
    missing = [g for g in cfg.galois_elements() if g not in keys.galois]
    if missing:
        raise ckks.MissingKey(f"missing Galois keys: {sorted(missing)}")
    msg_scale = ct.scale
    ct = ckks.drop_limbs(ct, 1)
    ct = _switch(ct, bkeys.to_sparse, keys)
    ct = mod_raise(ct)
    ct = _switch(ct, bkeys.from_sparse, keys)
    ct = subsum(ct, cfg, keys)
    gap = params.N // (2 * cfg.n)
    ct.scale = gap * cfg._q0 * cfg.K
    parts = coeff_to_slot(ct, cfg, keys)
    parts = tuple(eval_mod(p, cfg, keys) for p in parts)
    return slot_to_coeff(parts, cfg, keys, msg_scale)


def amortized_mult_time(t_boot: float, t_mult, levels: int, n: int) -> float:
    """(T_boot + sum of per-level mult times) / (levels * n)."""
    if levels < 1 or n < 1:
        raise ValueError("levels and n must be positive")
    if np.ndim(t_mult) == 0:
        total = float(t_mult) * levels
    else:
        t_mult = list(t_mult)
        if len(t_mult) != levels:
            raise ValueError("need one mult time per level")
        total = float(sum(t_mult))
    return (t_boot + total) / (levels * n)
