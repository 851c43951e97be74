"""Analytical cycle model of the FPGA accelerator.

Costs are built bottom-up from primitive records (NTT limbs, elementwise
limb passes, key streaming, inter-device transfers).  Scheme-level
operations, bootstrapping and the LR iteration are expanded into those
records by :class:`~fabhe.ops.TraceOps`, so the model follows the same
schedule the functional code executes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .ops import SymCt, TraceOps, TraceRecord
from .params import SchemeParams
from .rns import OpCounter

MB = 1e6


@dataclass(frozen=True)
class HardwareProfile:
    clock_hz: float = 3e8
    n_functional_units: int = 256
    cycles_modadd: int = 7
    cycles_modsub: int = 7
    cycles_intmul: int = 12
    cycles_modreduce: int = 12
    uram_banks: int = 5
    uram_polys_per_bank: int = 16
    bram_banks: int = 2
    bram_polys_per_bank: int = 8
    bram_small_banks: int = 1
    bram_small_polys: int = 4
    onchip_total: float = 43 * MB
    register_file: float = 2 * MB
    hbm_bw: float = 460e9
    hbm_ports: int = 32
    hbm_port_bits: int = 256
    cmac_cycles_per_limb: int = 11399
    cmac_cycles_per_ct: int = 546980
    key_read_latency: int = 300
    # fit constants (frozen after one calibration against the published op table)
    ntt_cycle_factor: float = 0.5    # exposed share of the single-pipeline NTT formula
    ntt_fill: int = 0                # per-limb pipeline fill, folded into the formula
    hoist_baby_steps: bool = True    # baby-step rotations share one Decomp/ModUp
    fused_mac: bool = True           # additions inside BConv/KSKIP ride the multiplier pipe

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise ValueError(f"{k} must be non-negative")
            if k in ("clock_hz", "n_functional_units", "hbm_bw") and v <= 0:
                raise ValueError(f"{k} must be positive")

    @property
    def cycles_mulreduce(self) -> int:
        return self.cycles_intmul + self.cycles_modreduce

    def uram_bank_bytes(self, N: int = 2 ** 16, logq: int = 54) -> int:
        return self.uram_polys_per_bank * poly_bytes(N, logq)

    def bram_bank_bytes(self, N: int = 2 ** 16, logq: int = 54) -> int:
        return self.bram_polys_per_bank * poly_bytes(N, logq)

    def onchip_polys(self) -> int:
        return (self.uram_banks * self.uram_polys_per_bank + self.bram_banks * self.bram_polys_per_bank
                + self.bram_small_banks * self.bram_small_polys)

    def seconds(self, cycles: float) -> float:
        return cycles / self.clock_hz


FAB = HardwareProfile()


# ---------------------------------------------------------------- sizes

def poly_bytes(N: int, logq: int) -> int:
    """One limb of one polynomial."""
    return N * math.ceil(logq) // 8


def ct_bytes(params: SchemeParams, limbs: int | None = None) -> int:
    """Two polynomials; ``limbs`` defaults to the raised count (modulus PQ)."""
    limbs = params.raised_limbs if limbs is None else limbs
    return 2 * limbs * poly_bytes(params.N, params.logq)


def key_bytes(params: SchemeParams, compressed: bool = False) -> int:
    full = 2 * params.dnum * params.raised_limbs * poly_bytes(params.N, params.logq)
    return full // 2 if compressed else full


# ---------------------------------------------------------------- primitive cycles

def ntt_cycles(N: int, limbs: int = 1, fill: int = 0) -> int:
    """log2(N) * N / 512 cycles per limb on the 256-unit radix-2 pipeline."""
    if N & (N - 1) or N < 1:
        raise ValueError("N must be a power of two")
    if limbs <= 0:
        return 0
    return limbs * (int(math.log2(N)) * N // 512 + fill)


def elementwise_cycles(kind: str, N: int, limbs: int, profile: HardwareProfile = FAB) -> int:
    """Streaming limb pass: N/256 issue cycles per limb plus one pipeline fill."""
    lat = {"add": profile.cycles_modadd, "sub": profile.cycles_modsub,
           "mul": profile.cycles_mulreduce}.get(kind)
    if lat is None:
        raise ValueError(f"unknown elementwise op {kind}")
    if limbs <= 0:
        return 0
    return limbs * (N // profile.n_functional_units) + lat


def _ntt_limb(N, profile):
    return ntt_cycles(N, 1, profile.ntt_fill) * profile.ntt_cycle_factor


def ntt_ops_per_second(N: int, profile: HardwareProfile = FAB, limbs_per_op: int = 1) -> float:
    """NTT throughput; ``limbs_per_op`` selects per-limb or per-polynomial accounting."""
    return profile.clock_hz / (_ntt_limb(N, profile) * limbs_per_op)


# ---------------------------------------------------------------- key switching

def keyswitch_parts(params: SchemeParams, level: int, datapath: str = "modified") -> dict:
    """Closed-form counters split into ModUp, KSKIP and ModDown shares."""
    if datapath not in ("modified", "reference"):
        raise ValueError(f"unknown datapath {datapath}")
    K = params.K
    raised = level + K
    exact = 1 if params.modup_exact else 0
    up, ip, down = OpCounter(), OpCounter(), OpCounter()
    for d in params.digits(level):
        a = len(d)
        t = raised - a
        up.intt += a
        if datapath == "modified":
            up.modmul += a + a * t + exact * t
            up.ntt += t
            ip.modmul += 2 * a + 2 * t
        else:
            up.modmul += 2 * a * t + exact * t
            up.ntt += raised
            ip.modmul += 2 * raised
        ip.key_bytes += 2 * raised * poly_bytes(params.N, params.logq)
    for _ in range(2):
        down.intt += K
        down.modmul += K + K * level + level + level
        down.ntt += level
    return {"modup": up, "kskip": ip, "moddown": down}


def _sum_counters(cs) -> OpCounter:
    out = OpCounter()
    for c in cs:
        out.ntt += c.ntt
        out.intt += c.intt
        out.modmul += c.modmul
        out.key_bytes += c.key_bytes
    return out


def keyswitch_counts(params: SchemeParams, level: int, datapath: str = "modified",
                     hoisted: bool = False) -> OpCounter:
    """Closed-form counters of one key switch; equal to the functional counters.

    ``hoisted`` drops the ModUp share (reused from an earlier switch of the
    same input).
    """
    parts = keyswitch_parts(params, level, datapath)
    if hoisted:
        parts.pop("modup")
    c = _sum_counters(parts.values())
    c.switches = 1
    return c


@dataclass
class CostReport:
    parts: dict = field(default_factory=dict)     # name -> cycles
    clock_hz: float = 3e8
    bytes_offchip: float = 0.0
    peak_onchip: float = 0.0
    amortized_s: float | None = None

    @property
    def total_cycles(self) -> float:
        return float(sum(self.parts.values()))

    @property
    def seconds(self) -> float:
        return self.total_cycles / self.clock_hz

    def add(self, name: str, cycles: float):
        self.parts[name] = self.parts.get(name, 0.0) + cycles

    def merge(self, other: "CostReport", prefix: str = "", times: int = 1):
        for k, v in other.parts.items():
            self.add(prefix + k, v * times)
        self.bytes_offchip += other.bytes_offchip * times
        self.peak_onchip = max(self.peak_onchip, other.peak_onchip)
        return self

    def __str__(self):
        lines = [f"{k:<14s} {v:14.0f} cycles" for k, v in sorted(self.parts.items())]
        lines.append(f"{'total':<14s} {self.total_cycles:14.0f} cycles = {self.seconds * 1e3:.4f} ms")
        lines.append(f"off-chip bytes {self.bytes_offchip / MB:.2f} MB, peak on-chip {self.peak_onchip / MB:.2f} MB")
        if self.amortized_s is not None:
            lines.append(f"amortized      {self.amortized_s * 1e6:.4f} us/slot")
        return "\n".join(lines)


def keyswitch_cost(counter: OpCounter, profile: HardwareProfile = FAB, N: int = 2 ** 16,
                   digits: int = 1) -> CostReport:
    """NTT + multiply cycles; key streaming overlaps compute digit by digit."""
    rep = CostReport(clock_hz=profile.clock_hz)
    ntt = (counter.ntt + counter.intt) * _ntt_limb(N, profile)
    mul = counter.modmul * (N // profile.n_functional_units)
    if not profile.fused_mac:
        mul *= 2
    compute = ntt + mul
    if compute == 0 and counter.key_bytes == 0:
        return rep
    transfer = counter.key_bytes / profile.hbm_bw * profile.clock_hz
    digits = max(1, digits)
    per_digit_compute = compute / digits
    hidden = per_digit_compute >= profile.key_read_latency
    rep.add("ntt", ntt)
    rep.add("modmul", mul)
    if transfer > compute:
        rep.add("key_stream", transfer - compute)
    if not hidden:
        rep.add("key_latency", profile.key_read_latency)
    rep.bytes_offchip = counter.key_bytes
    return rep


# ---------------------------------------------------------------- record costing

def record_cycles(r: TraceRecord, params: SchemeParams, profile: HardwareProfile = FAB) -> CostReport:
    N, l = r.N, r.limbs
    rep = CostReport(clock_hz=profile.clock_hz)
    if r.kind == "keyswitch":
        hoisted = "hoisted" in r.flags and profile.hoist_baby_steps
        c = keyswitch_counts(params, l, "reference" if "reference" in r.flags else "modified", hoisted)
        return keyswitch_cost(c, profile, N, len(params.digits(l)))
    if r.kind in ("modup", "kskip", "moddown"):
        c = keyswitch_parts(params, l)[r.kind]
        return keyswitch_cost(c, profile, N, len(params.digits(l)))
    if r.kind == "add":
        rep.add("add", elementwise_cycles("add", N, l, profile))
    elif r.kind == "pmult":
        rep.add("pmult", elementwise_cycles("mul", N, 2 * l, profile))
    elif r.kind == "tensor":
        rep.add("tensor", elementwise_cycles("mul", N, 4 * l, profile)
                + elementwise_cycles("add", N, l, profile))
    elif r.kind == "automorph":
        rep.add("automorph", l * (N // profile.n_functional_units))
    elif r.kind == "rescale":
        # per polynomial: iNTT of the top limb, NTT of it under the l-1 others, sub + mul
        rep.add("ntt", 2 * l * _ntt_limb(N, profile))
        rep.add("rescale_mul", elementwise_cycles("mul", N, 2 * (l - 1), profile))
    elif r.kind == "modraise":
        rep.add("ntt", 2 * (l + 1) * _ntt_limb(N, profile))
    elif r.kind == "comm":
        rep.add("comm", l * profile.cmac_cycles_per_limb)
    else:
        raise ValueError(f"unknown record kind {r.kind}")
    return rep


def trace_ntt_count(records, params: SchemeParams) -> int:
    """Limb NTTs and inverse NTTs issued by a trace."""
    total = 0
    for r in records:
        if r.kind == "keyswitch":
            c = keyswitch_counts(params, r.limbs, hoisted="hoisted" in r.flags)
        elif r.kind in ("modup", "kskip", "moddown"):
            c = keyswitch_parts(params, r.limbs)[r.kind]
        elif r.kind == "rescale":
            total += 2 * r.limbs * r.count
            continue
        elif r.kind == "modraise":
            total += 2 * (r.limbs + 1) * r.count
            continue
        else:
            continue
        total += (c.ntt + c.intt) * r.count
    return total


def trace_cost(records, params: SchemeParams, profile: HardwareProfile = FAB) -> CostReport:
    rep = CostReport(clock_hz=profile.clock_hz)
    tally: dict = {}
    for r in records:
        key = r._replace(count=1)
        tally[key] = tally.get(key, 0) + r.count
    for r, times in tally.items():
        rep.merge(record_cycles(r, params, profile), times=times)
    return rep


# ---------------------------------------------------------------- basic ops

OPS = ("Add", "Mult", "Rescale", "Rotate")


def op_trace(op: str, params: SchemeParams, level: int | None = None) -> list:
    """Primitive records of one Table-style operation (Mult excludes its rescale)."""
    l = params.L + 1 if level is None else level
    t = TraceOps(params.N)
    if op == "Add":
        t.add_rec(l)
    elif op == "Mult":
        t._rec("tensor", l)
        t.keyswitch(l)
        t.add_rec(l)
    elif op == "Rescale":
        t.rescale_rec(l)
    elif op == "Rotate":
        t.rotate_left(SymCt(l), 1)
    else:
        raise ValueError(f"unknown op {op}")
    return t.records


def estimate_op_time(op: str, params: SchemeParams | None = None, profile: HardwareProfile = FAB,
                     level: int | None = None) -> float:
    params = params or SchemeParams()
    return trace_cost(op_trace(op, params, level), params, profile).seconds


def mult_full_seconds(params: SchemeParams, level: int, profile: HardwareProfile = FAB) -> float:
    """ct x ct multiply including relinearization and rescale."""
    t = TraceOps(params.N)
    t.mult(SymCt(level), SymCt(level + 0))
    return trace_cost(t.records, params, profile).seconds


# ---------------------------------------------------------------- bootstrapping

@dataclass(frozen=True)
class BootShape:
    """Counts a bootstrap schedule needs; derived from the functional configuration."""
    N: int
    n: int
    top: int                    # limbs at ModRaise
    c2s: tuple                  # per stage: (nonzero babies, nonzero giants, diagonals)
    s2c: tuple
    coeffs: tuple
    baby: int
    packed: bool = False        # one EvalMod over 2n slots

    @property
    def subsum_steps(self) -> int:
        return (self.N // (2 * self.n)).bit_length() - 1


def _shape(offsets, n: int, n1: int | None = None) -> tuple:
    from .bootstrap import bsgs_cost, choose_baby
    offsets = sorted(offsets)
    nb, ng = bsgs_cost(offsets, n, n1 or choose_baby(offsets, n))
    return nb, ng, len(offsets)


@lru_cache(maxsize=32)
def _plan_shapes(n: int, fft_iter: int, packed: bool = False) -> tuple:
    """Per-stage (babies, giants, diagonals) for C2S and S2C.

    Unpacked shapes follow from the offset sumsets alone, so no diagonal is
    ever materialised; packed plans are small and are built for real.
    """
    from .bootstrap import group_offsets, split_stages, transform_plans
    if packed:
        c2s, s2c = transform_plans(n, fft_iter, True)
        return (tuple(_shape(p.diags, p.n, p.n1) for p in c2s),
                tuple(_shape(p.diags, p.n, p.n1) for p in s2c))
    groups = split_stages(n.bit_length() - 1, fft_iter)
    fwd = tuple(_shape(group_offsets(n, [2 ** s for s in g]), n) for g in groups)
    return fwd[::-1], fwd


def boot_shape(params: SchemeParams, n: int | None = None, K: float = 6.0, degree: int = 255,
               order: int = 3, baby: int = 16) -> BootShape:
    # defaults describe the large ring: with q0/delta ~ 2^10 a third-order
    # arcsine correction is already below the noise, so the tail coefficients vanish
    from .bootstrap import evalmod_coeffs
    n = n or params.slots
    packed = 4 * n <= params.N
    c2s, s2c = _plan_shapes(n, params.fft_iter, packed)
    coeffs = tuple(evalmod_coeffs(K, degree, order))
    return BootShape(params.N, n, params.L + 1, c2s, s2c, coeffs, baby, packed)


def _transform(t: TraceOps, level: int, stages, params: SchemeParams, hoist: bool = True) -> int:
    """One BSGS linear transform per stage.

    With ``hoist`` the schedule is double-hoisted: one shared ModUp for the
    baby steps, products and inner sums kept over the raised basis, one
    ModDown per giant step plus one for the accumulated result.
    """
    K = params.K
    for nb, ng, nd in stages:
        if hoist:
            t._rec("modup", level)
            t._rec("automorph", 2 * (level + K), count=nb)
            t._rec("kskip", level, count=nb)
            t.pmult(level + K, count=nd)
            t.add_rec(level + K, polys=2 * max(0, nd - 1))
            for kind, limbs in (("moddown", level), ("automorph", 2 * level), ("modup", level),
                                ("kskip", level), ("add", 2 * (level + K))):
                t._rec(kind, limbs, count=ng)
            t._rec("moddown", level)
        else:
            x = SymCt(level)
            for _ in range(nb):
                t.rotate_left(x, 1)
            t.pmult(level, count=nd)
            t.add_rec(level, polys=2 * max(0, nd - 1))
            for _ in range(ng):
                t.rotate_left(x, 1)
        t.rescale_rec(level)
        level -= 1
    return level


def trace_bootstrap(shape: BootShape, params: SchemeParams, hoist: bool = True) -> tuple:
    """Records of one bootstrap mirroring :func:`fabhe.bootstrap.bootstrap`; returns (records, level_out)."""
    from .bootstrap import eval_chebyshev_on
    import numpy as np
    t = TraceOps(shape.N)
    L = shape.top
    t.keyswitch(1)                       # to the sparse secret
    t._rec("modraise", L)
    t.keyswitch(L)                       # back to the dense secret
    x = SymCt(L, shape.n)
    for _ in range(shape.subsum_steps):
        t.rotate_left(x, 1)
        t.add_rec(L)
    level = _transform(t, L, shape.c2s, params, hoist)
    x = SymCt(level, shape.n)
    t.conjugate(x)
    t.add_rec(level)
    if shape.packed:
        level = eval_chebyshev_on(t, x, np.array(shape.coeffs), shape.baby).level
    else:
        t.add_rec(level)
        t.pmult(level)
        outs = [eval_chebyshev_on(t, x, np.array(shape.coeffs), shape.baby) for _ in range(2)]
        level = outs[0].level
        t.pmult(level)
        t.add_rec(level)
    level = _transform(t, level, shape.s2c, params, hoist)
    return t.records, level


def estimate_bootstrap(params: SchemeParams | None = None, profile: HardwareProfile = FAB,
                       n: int | None = None, shape: BootShape | None = None) -> CostReport:
    """Modeled bootstrap plus the per-slot amortized multiplication time."""
    params = params or SchemeParams()
    shape = shape or boot_shape(params, n)
    recs, lout = trace_bootstrap(shape, params, profile.hoist_baby_steps)
    rep = trace_cost(recs, params, profile)
    levels = lout - 1
    if levels < 1:
        rep.amortized_s = math.inf
        return rep
    t_mult = [mult_full_seconds(params, l, profile) for l in range(lout, lout - levels, -1)]
    rep.amortized_s = amortized(rep.seconds, t_mult, levels, shape.n)
    return rep


def amortized(t_boot: float, t_mult, levels: int, n: int) -> float:
    """(T_boot + sum over levels of T_mult) / (levels * n)."""
    if levels < 1 or n < 1:
        raise ValueError("levels and n must be positive")
    total = t_mult * levels if isinstance(t_mult, (int, float)) else sum(t_mult)
    return (t_boot + total) / (levels * n)


# ---------------------------------------------------------------- logistic regression

@dataclass(frozen=True)
class LrShape:
    samples: int = 1024
    features: int = 256
    weight_slots: int = 256


def estimate_lr(devices: int = 1, profile: HardwareProfile = FAB, params: SchemeParams | None = None,
                shape: LrShape = LrShape()) -> CostReport:
    """Seconds per training iteration.

    Workers each process their share of the minibatch ciphertexts in parallel;
    the reduction, update and bootstrap run on the master.  Two exchanges per
    iteration (weights out, partial gradients back) are charged at the CMAC rate.
    """
    from .lr import LrPacking, lr_iteration
    params = params or SchemeParams()
    pack = LrPacking(params.N // 2, shape.features)
    n_cts = -(-shape.samples // pack.samples_per_ct)
    bshape = boot_shape(params, shape.weight_slots)
    top = params.L + 1 - (2 * params.fft_iter + 9)
    per = -(-n_cts // max(1, devices))
    t = TraceOps(params.N, boot_trace=lambda level: trace_bootstrap(bshape, params, profile.hoist_baby_steps))
    u = SymCt(top, shape.weight_slots)
    data = [SymCt(top, pack.slots) for _ in range(per)]
    out = lr_iteration(t, u, data, pack, eta=0.5, gamma=1.0, batch=shape.samples)
    t.bootstrap(out)
    rep = trace_cost(t.records, params, profile)
    if devices > 1:
        ex = TraceOps(params.N)
        ex.comm((devices - 1) * 2 * top)              # packed weights to each worker
        ex.comm((devices - 1) * 2 * (top - 4))        # partial gradients back
        rep.merge(trace_cost(ex.records, params, profile))
    return rep


# ---------------------------------------------------------------- explorer

EXPLORE_COLUMNS = ("dnum", "fftIter", "alpha", "ext_limbs", "levels_after", "key_mb",
                   "key_mb_compressed", "ct_mb", "ntt_count", "amortized_us", "feasible")


def explore_params(dnums=(1, 2, 3, 4, 6, 8, 12, 24), fft_iters=(1, 2, 3, 4, 5), N: int = 2 ** 16,
                   logq: int = 54, log_pq: int = 1728, profile: HardwareProfile = FAB) -> list:
    """Fixed PQ budget: more digits free limbs for Q (more levels) but grow the key."""
    rows = []
    total = log_pq // logq
    for dnum in dnums:
        # largest Q limb count with ceil((L+1)/dnum) extension limbs inside the budget
        lq = max(l for l in range(1, total + 1) if l + -(-l // dnum) <= total)
        for it in fft_iters:
            p = SchemeParams(N=N, logq=logq, L=lq - 1, dnum=min(dnum, lq), fft_iter=it)
            after = p.levels_after_bootstrap
            feasible = after >= 1 and p.K >= p.alpha
            row = dict(dnum=dnum, fftIter=it, alpha=p.alpha, ext_limbs=p.K, levels_after=after,
                       key_mb=key_bytes(p) / MB, key_mb_compressed=key_bytes(p, True) / MB,
                       ct_mb=ct_bytes(p) / MB, ntt_count=0, amortized_us=math.inf, feasible=feasible)
            if feasible:
                recs, _ = trace_bootstrap(boot_shape(p), p)
                row["ntt_count"] = trace_ntt_count(recs, p)
                row["amortized_us"] = estimate_bootstrap(p, profile).amortized_s * 1e6
            rows.append(row)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EXPLORE_COLUMNS, extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- residency

def onchip_residency_check(trace, profile: HardwareProfile = FAB) -> tuple:
    """(fits, peak bytes) for a keyswitch Residency log (or None / empty)."""
    if trace is None or not trace.events:
        return True, 0
    peak = trace.peak_bytes
    return peak <= profile.onchip_total, peak


def naive_residency_bytes(params: SchemeParams) -> int:
    """All switching keys plus the raised ciphertext held on chip at once."""
    return key_bytes(params) + ct_bytes(params)


def with_profile(**kw) -> HardwareProfile:
    return replace(FAB, **kw)
