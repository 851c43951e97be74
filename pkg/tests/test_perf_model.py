import csv
import io
import math

import pytest

from fabhe import bootstrap as B
from fabhe import ckks
from fabhe import keyswitch as KS
from fabhe import paper_params
from fabhe import perf_model as pm
from fabhe.ops import SymCt, TraceOps, TraceRecord

# published reference points, seconds
TABLE_OPS = {"Add": 0.04e-3, "Mult": 1.71e-3, "Rescale": 0.19e-3, "Rotate": 1.57e-3}
BOOT_AMORTIZED = 0.477e-6
LR_ONE, LR_EIGHT = 0.103, 0.081
BAND = 0.5


def within(model, ref):
    return abs(model - ref) <= BAND * ref


@pytest.fixture(scope="module")
def P():
    return paper_params()


@pytest.mark.parametrize("op", sorted(TABLE_OPS))
def test_op_band(P, op):
    assert within(pm.estimate_op_time(op, P), TABLE_OPS[op])


def test_bootstrap_band(P):
    rep = pm.estimate_bootstrap(P)
    assert within(rep.amortized_s, BOOT_AMORTIZED)
    assert rep.seconds > 0


def test_lr_bands():
    one, eight = pm.estimate_lr(1).seconds, pm.estimate_lr(8).seconds
    assert within(one, LR_ONE) and within(eight, LR_EIGHT)
    assert eight < one


def test_sizes(P):
    assert pm.poly_bytes(P.N, P.logq) == 442368
    assert pm.ct_bytes(P) / 1e6 == pytest.approx(28.3, abs=0.1)
    assert pm.key_bytes(P) / 1e6 == pytest.approx(84.9, abs=0.5)
    assert pm.key_bytes(P, compressed=True) * 2 == pm.key_bytes(P)


def test_levels(P):
    assert B.boot_depth(P.fft_iter) == 17
    assert P.levels_after_bootstrap == 6


def test_residency(P):
    mod = KS.schedule(P, P.L + 1, "modified")
    fits, peak = pm.onchip_residency_check(mod)
    assert fits and peak <= 43e6
    assert pm.naive_residency_bytes(P) > 43e6
    assert pm.onchip_residency_check(None) == (True, 0)


def test_profile_validation():
    with pytest.raises(ValueError):
        pm.with_profile(clock_hz=0)
    with pytest.raises(ValueError):
        pm.with_profile(cycles_modadd=-1)
    assert pm.FAB.cycles_mulreduce == 24
    assert pm.FAB.onchip_polys() == 5 * 16 + 2 * 8 + 4


def test_counted_records_cost_like_repeats(P):
    one = [TraceRecord("pmult", 10, P.N, (), 5)]
    many = [TraceRecord("pmult", 10, P.N, (), 1)] * 5
    assert pm.trace_cost(one, P).total_cycles == pm.trace_cost(many, P).total_cycles


def test_report_totals_sum_parts(P):
    rep = pm.estimate_bootstrap(P)
    assert rep.total_cycles == pytest.approx(sum(rep.parts.values()))
    assert rep.seconds == pytest.approx(rep.total_cycles / pm.FAB.clock_hz)


def test_faster_clock_is_faster(P):
    fast = pm.with_profile(clock_hz=6e8)
    assert pm.estimate_op_time("Mult", P, fast) == pytest.approx(pm.estimate_op_time("Mult", P) / 2)


def test_amortized_definition():
    assert pm.amortized(6.0, 1.0, 4, 2) == pytest.approx(10.0 / 8)
    with pytest.raises(ValueError):
        pm.amortized(1.0, 1.0, 1, 0)


@pytest.mark.parametrize("n", [16, 64, 256])
@pytest.mark.parametrize("fft_iter", [1, 2, 4])
def test_symbolic_shapes_match_plans(n, fft_iter):
    c2s, s2c = B.transform_plans(n, fft_iter)
    real = (tuple(pm._shape(p.diags, p.n, p.n1) for p in c2s),
            tuple(pm._shape(p.diags, p.n, p.n1) for p in s2c))
    assert pm._plan_shapes(n, fft_iter) == real


def test_trace_bootstrap_levels(P):
    recs, lout = pm.trace_bootstrap(pm.boot_shape(P), P)
    assert lout == P.L + 1 - 17
    assert pm.trace_ntt_count(recs, P) > 0


def test_trace_underflow():
    t = TraceOps(2 ** 16)
    with pytest.raises(ckks.NeedsBootstrap):
        t.mult(SymCt(1), SymCt(1))


def test_explorer_trends():
    rows = pm.explore_params()
    at4 = sorted((r for r in rows if r["fftIter"] == 4 and r["feasible"]), key=lambda r: r["dnum"])
    for a, b in zip(at4, at4[1:]):
        assert a["levels_after"] <= b["levels_after"]
        assert a["key_mb"] < b["key_mb"]
    curve = {r["fftIter"]: r["amortized_us"] for r in rows if r["dnum"] == 3}
    assert min(curve, key=curve.get) in (3, 4)
    table = list(csv.DictReader(io.StringIO(pm.rows_to_csv(rows))))
    assert tuple(table[0]) == pm.EXPLORE_COLUMNS
    assert len(table) == len(rows)


def test_explorer_infeasible_rows_marked():
    # one digit: 16 extension limbs leave 16 for Q, too few for fftIter >= 3
    rows = {r["fftIter"]: r for r in pm.explore_params(dnums=(1,))}
    assert rows[2]["feasible"] and rows[2]["levels_after"] == 2
    for it in (3, 4, 5):
        assert not rows[it]["feasible"] and math.isinf(rows[it]["amortized_us"])
