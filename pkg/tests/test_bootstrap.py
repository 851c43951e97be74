import numpy as np
import pytest

from fabhe import bootstrap as B
from fabhe import ckks
from fabhe import perf_model as pm
from fabhe.ops import SymCt, TraceOps, count_kinds
from fabhe.params import SchemeParams


def chain(plans):
    M = np.eye(plans[0].n, dtype=complex)
    for p in plans:
        M = p.matrix() @ M
    return M


# ---------------------------------------------------------------- clear relations

@pytest.mark.parametrize("n", [4, 16, 64])
@pytest.mark.parametrize("fft_iter", [1, 2, 3])
def test_slot_to_coeff_is_bitreversed_embedding(n, fft_iter):
    _, s2c = B.transform_plans(n, fft_iter)
    want = B.embedding_matrix(n)[:, B.bitrev_perm(n)]
    assert np.max(np.abs(chain(s2c) - want)) < 1e-12


@pytest.mark.parametrize("n", [8, 32])
def test_coeff_to_slot_inverts_half(n):
    c2s, s2c = B.transform_plans(n, 2)
    assert np.max(np.abs(chain(s2c) @ chain(c2s) - 0.5 * np.eye(n))) < 1e-12


def test_stage_product_matches_dense_oracle():
    n = 16
    stages = [B.stage_diagonals(n, 2 ** s) for s in range(1, 5)]
    M = np.eye(n, dtype=complex)
    for D in stages:
        M = B.dense(D, n) @ M
    merged = B._merge(stages, n)
    assert np.max(np.abs(B.dense(merged, n) - M)) < 1e-12


def test_packed_plans_roundtrip(rng):
    n = 16
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    c2s_u, _ = B.transform_plans(n, 2)
    c2s, s2c = B.transform_plans(n, 2, packed=True)
    assert c2s[-1].n == 2 * n and s2c[0].n == 2 * n
    x = v
    for p in c2s[:-1]:
        x = B.apply_clear(p.diags, x)
    A = B.apply_clear(c2s[-1].diags, np.tile(x, 2))
    T = A + A.conj()
    w = 2 * (chain(c2s_u) @ v)
    assert np.allclose(T, np.concatenate([w.real, w.imag]))
    y = B.apply_clear(s2c[0].diags, T)[:n]
    for p in s2c[1:]:
        y = B.apply_clear(p.diags, y)
    assert np.allclose(y, v)


def test_bsgs_split_reassembles():
    _, s2c = B.transform_plans(64, 2)
    for plan in s2c:
        re = {}
        for g, inner in plan.split().items():
            for b, d in inner.items():
                re[(g + b) % plan.n] = np.roll(d, -g)
        assert set(re) == set(plan.diags)
        for k in re:
            assert np.allclose(re[k], plan.diags[k])
        babies, giants = B.bsgs_cost(plan.diags, plan.n, plan.n1)
        assert len(plan.rotations()) <= babies + giants


def test_group_offsets_cover_plan_diagonals():
    for n in (16, 64, 256):
        groups = B.split_stages(n.bit_length() - 1, 3)
        _, s2c = B.transform_plans(n, 3)
        for g, plan in zip(groups, s2c):
            assert set(plan.diags) <= B.group_offsets(n, [2 ** s for s in g])


def test_split_stages_partition():
    assert B.split_stages(15, 4) == [[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12], [13, 14, 15]]
    assert B.split_stages(3, 5) == [[1], [2], [3]]


# ---------------------------------------------------------------- EvalMod

def test_depth_formula():
    assert B.boot_depth(4) == 17
    assert [B.boot_depth(f) for f in (1, 2, 3, 5)] == [11, 13, 15, 19]


def test_evalmod_depth_is_nine():
    cfg_coeffs = B.evalmod_coeffs(5.0, 255, 7)
    t = TraceOps(2 ** 16)
    out = B.eval_chebyshev_on(t, SymCt(20, 64), cfg_coeffs)
    assert out.level == 20 - B.EVALMOD_DEPTH


def test_degree_limit():
    p = SchemeParams(N=2 ** 10, logq=30, L=23, dnum=3, n_slots=64)
    with pytest.raises(ValueError):
        B.BootstrapConfig(p, degree=256)


def test_arcsine_weights():
    assert B.arcsine_weights(5) == pytest.approx([1.0, 1 / 6, 3 / 40])


def test_interpolant_accuracy():
    p = SchemeParams(N=2 ** 10, logq=30, L=23, dnum=3, n_slots=64)
    cfg = B.BootstrapConfig(p, K=5.0, arcsine_order=7, sparse_h=8)
    assert cfg.poly_error(rho=2 ** -4) < 2 ** -18


def test_evalmod_encrypted(small_params, small_keys, rng):
    # t = x/K inside (-1, 1); EvalMod recovers the fractional part
    K = 4.0
    coeffs = B.evalmod_coeffs(K, 63, 1)
    x = rng.integers(-3, 4, 32) + rng.uniform(-0.02, 0.02, 32)
    ct = ckks.encrypt_values(x / K, small_keys)
    out = B.eval_chebyshev(ct, coeffs, small_keys)
    assert ct.level - out.level == 7       # ceil(log2 64) + 1
    got = ckks.decrypt_values(out, small_keys.sk)[:32].real
    assert np.max(np.abs(got - (x - np.rint(x)))) < 2 ** -8


# ---------------------------------------------------------------- pipeline

def desk_params(N, n):
    return SchemeParams(N=N, logq=30, L=23, dnum=3, delta=2.0 ** 28, n_slots=n, ext_limbs=9)


@pytest.fixture(scope="module")
def packed_setup():
    p = desk_params(2 ** 10, 64)
    cfg = B.BootstrapConfig(p, K=5.0, arcsine_order=7, sparse_h=8)
    ks = ckks.keygen(p, 1)
    bk = B.bootstrap_keygen(cfg, ks, 2)
    return p, cfg, ks, bk


def test_bootstrap_small_ring(packed_setup):
    p, cfg, ks, bk = packed_setup
    assert cfg.packed
    rng = np.random.default_rng(3)
    z = rng.uniform(-1, 1, 64) + 1j * rng.uniform(-1, 1, 64)
    ct = ckks.encrypt_values(z, ks, level=1, rng=rng)
    counter = ckks._plan(ks).counter
    counter.reset()
    out = B.bootstrap(ct, cfg, ks, bk)
    assert out.level == cfg.level_out() == 7
    assert out.n_slots == 64
    err = np.abs(ckks.decrypt_values(out, ks.sk) - z)
    # baseline at this size is about 14.3 bits
    assert -np.log2(err.mean()) >= 13.0
    recs, lout = pm.trace_bootstrap(pm.boot_shape(p, 64, K=5.0, order=7), p, hoist=False)
    assert lout == out.level
    assert count_kinds(recs)["keyswitch"] == counter.switches


def test_bootstrap_rejects_wrong_slots(packed_setup):
    p, cfg, ks, bk = packed_setup
    ct = ckks.encrypt_values(np.zeros(32), ks, level=1, n_slots=32)
    with pytest.raises(ValueError):
        B.bootstrap(ct, cfg, ks, bk)


def test_bootstrap_missing_keys(packed_setup):
    p, cfg, _, bk = packed_setup
    bare = ckks.keygen(p, 1)
    ct = ckks.encrypt_values(np.zeros(64), bare, level=1)
    with pytest.raises(ckks.MissingKey):
        B.bootstrap(ct, cfg, bare, bk)


# measured baseline about 12.0 bits (seeds 4-6); two n-slot EvalMods, no packing
UNPACKED_BITS = 11.5


@pytest.mark.slow
def test_bootstrap_unpacked():
    p = desk_params(2 ** 10, 512)
    cfg = B.BootstrapConfig(p, K=5.0, arcsine_order=7, sparse_h=8)
    assert not cfg.packed
    ks = ckks.keygen(p, 1)
    bk = B.bootstrap_keygen(cfg, ks, 2)
    rng = np.random.default_rng(4)
    z = rng.uniform(-1, 1, 512) + 1j * rng.uniform(-1, 1, 512)
    ct = ckks.encrypt_values(z, ks, level=1, rng=rng)
    counter = ckks._plan(ks).counter
    counter.reset()
    out = B.bootstrap(ct, cfg, ks, bk)
    err = np.abs(ckks.decrypt_values(out, ks.sk) - z)
    assert -np.log2(err.mean()) >= UNPACKED_BITS
    recs, _ = pm.trace_bootstrap(pm.boot_shape(p, 512, K=5.0, order=7), p, hoist=False)
    assert count_kinds(recs)["keyswitch"] == counter.switches


def test_amortized_formula():
    assert B.amortized_mult_time(10.0, 1.0, 5, 3) == pytest.approx(15.0 / 15)
    assert B.amortized_mult_time(10.0, [1, 2], 2, 1) == pytest.approx(6.5)
    with pytest.raises(ValueError):
        B.amortized_mult_time(1.0, 1.0, 0, 1)
