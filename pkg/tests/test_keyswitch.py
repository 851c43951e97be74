import numpy as np
import pytest

from fabhe import ckks, keyswitch as KS, perf_model as pm
from fabhe.params import SchemeParams, uniform_poly


@pytest.fixture(scope="module")
def ks_setup():
    p = SchemeParams(N=2 ** 10, logq=30, L=11, dnum=3, delta=2.0 ** 25)
    return p, ckks.keygen(p, 3)


def _switch(p, key, part, datapath):
    plan = KS.KeySwitchPlan(p, datapath)
    out = KS.key_switch(part, key, p, plan)
    return out, plan


@pytest.mark.parametrize("level", [12, 10, 7, 4, 1])
def test_datapaths_bit_identical(ks_setup, rng, level):
    p, ks = ks_setup
    part = uniform_poly(rng, p.level_moduli(level), p.N)
    (a1, b1), _ = _switch(p, ks.relin, part, "modified")
    (a2, b2), _ = _switch(p, ks.relin, part, "reference")
    assert np.array_equal(a1.data, a2.data) and np.array_equal(b1.data, b2.data)


@pytest.mark.parametrize("datapath", KS.DATAPATHS)
@pytest.mark.parametrize("level", [12, 9, 5, 1])
def test_counters_match_closed_form(ks_setup, rng, datapath, level):
    p, ks = ks_setup
    part = uniform_poly(rng, p.level_moduli(level), p.N)
    _, plan = _switch(p, ks.relin, part, datapath)
    assert plan.counter == pm.keyswitch_counts(p, level, datapath)


def test_switch_decrypts_correctly(ks_setup, rng):
    """b' + a' s ~= d s^2 for the relinearization key."""
    p, ks = ks_setup
    level = 8
    d = uniform_poly(rng, p.level_moduli(level), p.N)
    (a, b), _ = _switch(p, ks.relin, d, "modified")
    s = ks.sk.at(level)
    lhs = (b + a * s).to_coeff()
    rhs = (d * s * s).to_coeff()
    diff = (lhs - rhs).data[0].astype(np.int64)
    q = p.chain[0].q
    diff = np.where(diff > q // 2, diff - q, diff)
    # ModDown rounding plus e * d / P stays tiny next to q
    assert np.max(np.abs(diff)) < 2 ** 12


def test_modified_generates_fewer_ntts(ks_setup):
    p, _ = ks_setup
    for level in (12, 6):
        m = pm.keyswitch_counts(p, level, "modified")
        r = pm.keyswitch_counts(p, level, "reference")
        assert m.ntt < r.ntt
        assert m.modmul < r.modmul
        assert m.key_bytes == r.key_bytes


def test_residency_schedules():
    p = SchemeParams()
    mod = KS.schedule(p, 24, "modified")
    ref = KS.schedule(p, 24, "reference")
    assert mod.peak_bytes <= 43e6 < ref.peak_bytes
    assert mod.streamed_limbs == ref.streamed_limbs == 2 * 3 * 32
    assert not mod.live and not ref.live


def test_plan_rejects_unknown_datapath(ks_setup):
    with pytest.raises(ValueError):
        KS.KeySwitchPlan(ks_setup[0], "fast")


def test_decomp_blocks(ks_setup, rng):
    p, _ = ks_setup
    part = uniform_poly(rng, p.level_moduli(10), p.N)
    blocks = KS.decomp(part, p)
    assert [b.limbs for b in blocks] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
    with pytest.raises(ValueError):
        KS.decomp(part.to_coeff(), p)
