"""Hybrid key switching with two datapaths.

``reference``: Decomp -> ModUp (iNTT, basis conversion, NTT of every raised
limb) for all digits -> inner product with the key -> ModDown.

``modified``: per digit, the alpha source limbs are multiplied into the
accumulators straight away (they are already in evaluation form and do not
change under ModUp), then converted; only the generated limbs are NTT'd and
multiplied in.  Both paths are exact modular arithmetic and produce
bit-identical outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ntt import Poly, ntt_batch
from .params import SchemeParams, gaussian, seeded_rng, uniform_poly
from .rns import OpCounter, basis_convert, vec_add, vec_mul, vec_scalar_col, vec_sub

DATAPATHS = ("modified", "reference")


@dataclass
class SwitchingKey:
    """dnum columns (a_j, b_j) over every original and extension limb, evaluation form.

    b_j = -a_j * s_to + e_j + P * s_from on the limbs of digit j (zero gadget
    weight elsewhere).  a_j is expanded from ``seed``; ``compressed`` only
    decides whether serialization stores the a rows or the seed.
    """
    a: list
    b: list
    seed: bytes
    tag: str = "switch"
    compressed: bool = True

    @property
    def dnum(self) -> int:
        return len(self.b)

    def nbytes(self, logq: int) -> int:
        l, N = self.b[0].data.shape
        rows = 1 if self.compressed else 2
        return rows * self.dnum * l * N * logq // 8


def expand_a(seed: bytes, j: int, moduli, N: int) -> Poly:
    return uniform_poly(seeded_rng(seed, j), moduli, N)


def gen_switching_key(params: SchemeParams, s_from: Poly, s_to: Poly, rng: np.random.Generator,
                      tag: str = "switch", compressed: bool = True) -> SwitchingKey:
    """Key taking a ciphertext part under ``s_from`` to one under ``s_to``.

    Both secrets are evaluation-form Polys over the full raised basis.
    """
    moduli = params.raised_moduli(params.L + 1)
    N = params.N
    seed = rng.bytes(32)
    P = params.P
    nq = params.L + 1
    a_rows, b_rows = [], []
    for j, idx in enumerate(params.digits(nq)):
        a = expand_a(seed, j, moduli, N)
        e = Poly.from_ints(gaussian(rng, N, params.sigma), moduli, ntt=True)
        b = e - a * s_to
        w = np.zeros((len(moduli), 1), dtype=np.uint64)
        for i in idx:
            w[i, 0] = P % moduli[i].q
        b = b + s_from.scale_by(w)
        a_rows.append(a)
        b_rows.append(b)
    return SwitchingKey(a_rows, b_rows, seed, tag, compressed)


# ---------------------------------------------------------------- residency

@dataclass
class Residency:
    """Limb-granular on-chip occupancy log."""
    bytes_per_limb: int
    events: list = field(default_factory=list)
    live: dict = field(default_factory=dict)
    peak_limbs: int = 0
    streamed_limbs: int = 0

    def alloc(self, name: str, limbs: int):
        self.events.append(("alloc", name, limbs))
        self.live[name] = self.live.get(name, 0) + limbs
        self.peak_limbs = max(self.peak_limbs, sum(self.live.values()))

    def free(self, name: str):
        self.events.append(("free", name, self.live.get(name, 0)))
        self.live.pop(name, None)

    def stream(self, name: str, limbs: int):
        self.events.append(("stream", name, limbs))
        self.streamed_limbs += limbs

    @property
    def peak_bytes(self) -> int:
        return self.peak_limbs * self.bytes_per_limb


def limb_bytes(params: SchemeParams) -> int:
    return params.N * params.logq // 8


def schedule(params: SchemeParams, level: int, datapath: str = "modified") -> Residency:
    """Symbolic occupancy trace of one key switch at ``level`` limbs."""
    r = Residency(limb_bytes(params))
    _emit(r, params, level, datapath)
    return r


def _emit(r: Residency, params: SchemeParams, level: int, datapath: str, step: str | None = None,
          digit: int | None = None):
    raised = level + params.K
    ndig = len(params.digits(level))
    if datapath == "modified":
        if step in (None, "start"):
            r.alloc("input", level)
            r.alloc("acc", 2 * raised)
            r.alloc("keybuf", 4)     # double-buffered (a, b) key limbs
            r.alloc("work", 1)       # one generated limb in flight
        if step in (None, "digit"):
            for _ in range(ndig if step is None else 1):
                r.stream("key", 2 * raised)
        if step in (None, "end"):
            r.free("input")
            r.free("keybuf")
            r.free("work")
            r.free("acc")
    else:
        if step in (None, "start"):
            r.alloc("keys", 2 * ndig * raised)
            r.stream("key", 2 * ndig * raised)
            r.alloc("acc", 2 * raised)
            r.alloc("input", level)
        if step in (None, "end"):
            r.free("input")
            r.free("acc")
            r.free("keys")


# ---------------------------------------------------------------- steps

@dataclass
class DigitBlock:
    index: int
    limbs: list          # positions in the current level
    data: Poly           # source limbs, evaluation form


@dataclass
class KeySwitchPlan:
    params: SchemeParams
    datapath: str = "modified"
    counter: OpCounter = field(default_factory=OpCounter)
    trace: Residency | None = None

    def __post_init__(self):
        if self.datapath not in DATAPATHS:
            raise ValueError(f"unknown datapath {self.datapath}")

    def digit_bounds(self, level: int) -> list:
        return [(d[0], d[-1] + 1) for d in self.params.digits(level)]

    def report(self) -> dict:
        return dict(ntt_count=self.counter.ntt, intt_count=self.counter.intt,
                    modmul_count=self.counter.modmul, key_bytes_streamed=self.counter.key_bytes,
                    peak_onchip_bytes=self.trace.peak_bytes if self.trace else 0)


def decomp(a: Poly, params: SchemeParams) -> list:
    if a.level == 0:
        raise ValueError("empty polynomial")
    if not a.ntt:
        raise ValueError("decomp expects evaluation form")
    return [DigitBlock(j, idx, a.limbs(idx)) for j, idx in enumerate(params.digits(a.level))]


def _targets(block: DigitBlock, level: int, params: SchemeParams):
    """Positions (in the raised layout) and moduli of the limbs ModUp generates."""
    own = set(block.limbs)
    pos = [i for i in range(level) if i not in own] + list(range(level, level + params.K))
    moduli = params.raised_moduli(level)
    return pos, tuple(moduli[i] for i in pos)


def basis_convert_naive(x: np.ndarray, src, dst, counter: OpCounter | None = None,
                        exact: bool = False) -> np.ndarray:
    """Same result as :func:`basis_convert` but rebuilds x_i*Qtilde_i for every target."""
    out = np.empty((len(dst), x.shape[1]), dtype=np.uint64)
    for j, p in enumerate(dst):
        out[j] = basis_convert(x, src, (p,), exact=exact)[0]
    if counter is not None:
        counter.modmul += 2 * len(src) * len(dst) + (len(dst) if exact else 0)
    return out


def mod_up(block: DigitBlock, level: int, params: SchemeParams, counter: OpCounter | None = None,
           datapath: str = "modified") -> Poly:
    """Raise one digit to every limb of the current level plus the extension limbs."""
    src = block.data.moduli
    coeff = ntt_batch(block.data.data, src, inverse=True)
    if counter is not None:
        counter.intt += len(src)
    pos, dst = _targets(block, level, params)
    moduli = params.raised_moduli(level)
    out = np.empty((len(moduli), coeff.shape[1]), dtype=np.uint64)
    if datapath == "modified":
        gen = basis_convert(coeff, src, dst, counter, exact=params.modup_exact)
        out[pos] = ntt_batch(gen, dst)
        out[block.limbs] = block.data.data
        if counter is not None:
            counter.ntt += len(dst)
    else:
        gen = basis_convert_naive(coeff, src, dst, counter, exact=params.modup_exact)
        out[pos] = gen
        out[block.limbs] = coeff
        out = ntt_batch(out, moduli)
        if counter is not None:
            counter.ntt += len(moduli)
    return Poly(out, moduli, True)


def _key_rows(ksk: SwitchingKey, j: int, level: int, params: SchemeParams, rows):
    """Rows of key column j at raised-layout positions ``rows``."""
    nq = params.L + 1
    full = [r if r < level else nq + (r - level) for r in rows]
    return ksk.a[j].data[full], ksk.b[j].data[full]


def _mac(acc_a, acc_b, x, ka, kb, moduli, counter):
    acc_a[:] = vec_add(acc_a, vec_mul(x, ka, moduli), moduli)
    acc_b[:] = vec_add(acc_b, vec_mul(x, kb, moduli), moduli)
    if counter is not None:
        counter.modmul += 2 * len(moduli)


def kskip_partial(block: DigitBlock, ksk: SwitchingKey, acc: tuple, level: int,
                  params: SchemeParams, counter: OpCounter | None = None):
    """Accumulate the untouched source limbs of a digit against its key column."""
    acc_a, acc_b = acc
    rows = block.limbs
    if acc_a.shape[0] != level + params.K:
        raise ValueError("accumulator basis mismatch")
    ka, kb = _key_rows(ksk, block.index, level, params, rows)
    moduli = tuple(params.raised_moduli(level)[r] for r in rows)
    sub_a, sub_b = acc_a[rows], acc_b[rows]
    _mac(sub_a, sub_b, block.data.data, ka, kb, moduli, counter)
    acc_a[rows], acc_b[rows] = sub_a, sub_b


def kskip_complete(raised: Poly, block: DigitBlock, ksk: SwitchingKey, acc: tuple, level: int,
                   params: SchemeParams, counter: OpCounter | None = None):
    """Accumulate the generated limbs of a digit."""
    acc_a, acc_b = acc
    if acc_a.shape[0] != level + params.K:
        raise ValueError("accumulator basis mismatch")
    pos, dst = _targets(block, level, params)
    ka, kb = _key_rows(ksk, block.index, level, params, pos)
    sub_a, sub_b = acc_a[pos], acc_b[pos]
    _mac(sub_a, sub_b, raised.data[pos], ka, kb, dst, counter)
    acc_a[pos], acc_b[pos] = sub_a, sub_b


def kskip_full(raised: Poly, j: int, ksk: SwitchingKey, acc: tuple, level: int,
               params: SchemeParams, counter: OpCounter | None = None):
    rows = list(range(level + params.K))
    ka, kb = _key_rows(ksk, j, level, params, rows)
    _mac(acc[0], acc[1], raised.data, ka, kb, raised.moduli, counter)


def mod_down(acc: np.ndarray, level: int, params: SchemeParams,
             counter: OpCounter | None = None) -> Poly:
    """round(acc / P) over the first ``level`` limbs; acc is evaluation form over the raised basis."""
    qm = params.level_moduli(level)
    pm = params.p_moduli
    xp = ntt_batch(acc[level:], pm, inverse=True)
    conv = basis_convert(xp, pm, qm, counter, centered=True)
    conv = ntt_batch(conv, qm)
    pinv = vec_scalar_col([pow(params.P % m.q, -1, m.q) for m in qm], qm)
    out = vec_mul(vec_sub(acc[:level], conv, qm), pinv, qm)
    if counter is not None:
        counter.intt += len(pm)
        counter.ntt += len(qm)
        counter.modmul += len(qm)
    return Poly(out, qm, True)


def key_switch(part: Poly, ksk: SwitchingKey, params: SchemeParams,
               plan: KeySwitchPlan | None = None) -> tuple:
    """Return (a', b') over ``part``'s limbs with b' + a'*s_to ~= part*s_from."""
    plan = plan or KeySwitchPlan(params)
    level = part.level
    c = plan.counter
    if plan.trace is None:
        plan.trace = Residency(limb_bytes(params))
    tr = plan.trace
    N = part.N
    raised = level + params.K
    acc = (np.zeros((raised, N), dtype=np.uint64), np.zeros((raised, N), dtype=np.uint64))
    blocks = decomp(part, params)
    _emit(tr, params, level, plan.datapath, "start")
    key_limb_bytes = N * params.logq // 8
    if plan.datapath == "modified":
        for blk in blocks:
            _emit(tr, params, level, plan.datapath, "digit")
            c.key_bytes += 2 * raised * key_limb_bytes
            kskip_partial(blk, ksk, acc, level, params, c)
            up = mod_up(blk, level, params, c, "modified")
            kskip_complete(up, blk, ksk, acc, level, params, c)
    else:
        c.key_bytes += 2 * len(blocks) * raised * key_limb_bytes
        ups = [mod_up(blk, level, params, c, "reference") for blk in blocks]
        for blk, up in zip(blocks, ups):
            _emit(tr, params, level, plan.datapath, "digit")
            kskip_full(up, blk.index, ksk, acc, level, params, c)
    out_a = mod_down(acc[0], level, params, c)
    out_b = mod_down(acc[1], level, params, c)
    c.switches += 1
    _emit(tr, params, level, plan.datapath, "end")
    return out_a, out_b
