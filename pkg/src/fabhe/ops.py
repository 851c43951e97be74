"""Evaluator interface shared by encrypted runs and symbolic op traces.

Algorithms written against an evaluator (EvalMod, the LR iteration) run
unchanged on real ciphertexts via :class:`CkksOps` or on level-only
placeholders via :class:`TraceOps`, which records primitive operations
for the cost model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from . import ckks


class TraceRecord(NamedTuple):
    kind: str          # add, pmult, rescale, tensor, keyswitch, automorph, modraise, comm
    limbs: int
    N: int
    flags: tuple = ()
    count: int = 1     # identical repetitions


class CkksOps:
    def __init__(self, keys: ckks.KeySet, boot=None):
        self.keys = keys
        self.boot = boot          # (BootstrapConfig, BootKeys) or None

    @staticmethod
    def level(x) -> int:
        return x.level

    def mult(self, a, b):
        return ckks.mult(a, b, self.keys)

    def add(self, a, b):
        return ckks.add(a, b)

    def sub(self, a, b):
        return ckks.sub(a, b)

    def add_const(self, a, c):
        return ckks.add_const(a, c)

    def mult_const(self, a, value, target_level=None, target_scale=None):
        return ckks.mult_const(a, value, target_level, target_scale)

    def level_down(self, a, level):
        return ckks.level_down(a, level)

    def rotate_left(self, a, k):
        return ckks.rotate_left(a, k, self.keys)

    def rotate(self, a, k):
        return ckks.rotate(a, k, self.keys)

    def conjugate(self, a):
        return ckks.conjugate(a, self.keys)

    def mult_monomial(self, a, power):
        return ckks.mult_monomial(a, power)

    @staticmethod
    def with_slots(a, n):
        """Reinterpret as an n-slot ciphertext (value must lie in the n-slot subring)."""
        return ckks.Ciphertext(a.a, a.b, a.scale, a.params, n)

    def combine(self, terms, target):
        from .bootstrap import _combine
        return _combine(terms, target, terms[0][1].params)

    def bootstrap(self, a):
        from .bootstrap import bootstrap
        if self.boot is None:
            raise ckks.MissingKey("no bootstrapping keys")
        cfg, bk = self.boot
        return bootstrap(a, cfg, self.keys, bk)


@dataclass
class SymCt:
    level: int
    n_slots: int = 0


@dataclass
class TraceOps:
    """Level bookkeeping plus a flat list of primitive operations."""
    N: int
    records: list = field(default_factory=list)
    boot_trace: object = None       # callable(level) -> (records, level_out)

    def _rec(self, kind, limbs, *flags, count=1):
        if limbs > 0 and count > 0:
            self.records.append(TraceRecord(kind, limbs, self.N, tuple(flags), count))

    @staticmethod
    def level(x) -> int:
        return x.level

    def _need(self, level):
        if level < 1:
            raise ckks.NeedsBootstrap("level underflow in trace")

    # primitives, usable directly by hand-written schedules
    def keyswitch(self, limbs, hoisted=False):
        self._rec("keyswitch", limbs, *(("hoisted",) if hoisted else ()))

    def rescale_rec(self, limbs):
        self._rec("rescale", limbs)

    def pmult(self, limbs, count=1):
        self._rec("pmult", limbs, count=count)

    def add_rec(self, limbs, polys=2):
        self._rec("add", limbs * polys)

    # evaluator interface
    def _match(self, a, b):
        lv = min(a.level, b.level)
        for x in (a, b):
            if x.level > lv:
                self._cmult(x.level, lv)
        return lv

    def _cmult(self, lin, lout):
        self._need(lout)
        self.pmult(lout + 1)
        self.rescale_rec(lout + 1)

    def mult(self, a, b):
        lv = self._match(a, b) if a is not b else a.level
        self._need(lv - 1)
        self._rec("tensor", lv)
        self.keyswitch(lv)
        self.add_rec(lv)
        self.rescale_rec(lv)
        return SymCt(lv - 1, a.n_slots)

    def add(self, a, b):
        lv = self._match(a, b)
        self.add_rec(lv)
        return SymCt(lv, a.n_slots)

    sub = add

    def add_const(self, a, c):
        self.add_rec(a.level, polys=1)
        return SymCt(a.level, a.n_slots)

    def mult_const(self, a, value, target_level=None, target_scale=None):
        t = a.level - 1 if target_level is None else target_level
        self._cmult(a.level, t)
        return SymCt(t, a.n_slots)

    def level_down(self, a, level):
        if level == a.level:
            return a
        return self.mult_const(a, 1.0, level)

    def rotate_left(self, a, k, hoisted=False):
        if a.n_slots and k % a.n_slots == 0:
            return a
        self._rec("automorph", 2 * a.level)
        self.keyswitch(a.level, hoisted)
        self.add_rec(a.level, polys=1)
        return SymCt(a.level, a.n_slots)

    def rotate(self, a, k):
        return self.rotate_left(a, -k)

    def conjugate(self, a):
        self._rec("automorph", 2 * a.level)
        self.keyswitch(a.level)
        self.add_rec(a.level, polys=1)
        return SymCt(a.level, a.n_slots)

    def mult_monomial(self, a, power):
        self.pmult(a.level)
        return SymCt(a.level, a.n_slots)

    @staticmethod
    def with_slots(a, n):
        return SymCt(a.level, n)

    def combine(self, terms, target):
        self._need(target)
        self.pmult(target + 1, count=len(terms))
        self.add_rec(target + 1, polys=2 * max(0, len(terms) - 1))
        self.rescale_rec(target + 1)
        return SymCt(target, terms[0][1].n_slots)

    def bootstrap(self, a):
        if self.boot_trace is None:
            raise ckks.MissingKey("no bootstrap schedule attached")
        recs, lout = self.boot_trace(a.level)
        self.records.extend(recs)
        return SymCt(lout, a.n_slots)

    def comm(self, limbs):
        self._rec("comm", limbs)


def count_kinds(records) -> dict:
    out: dict = {}
    for r in records:
        out[r.kind] = out.get(r.kind, 0) + r.count
    return out
