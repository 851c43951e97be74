"""Acceptance criteria 1-11, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.
Criteria 3, 7 and 11 carry the ``slow`` marker (minutes, not seconds) but
run by default.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from fabhe import bootstrap as B
from fabhe import ckks, lr, paper_params
from fabhe import keyswitch as KS
from fabhe import perf_model as pm
from fabhe.params import SchemeParams, uniform_poly
from fabhe.rns import OpCounter, basis_convert, generate_modulus_chain, vec_reduce

_capsys_holder = {}


def report(n: int, ok: bool, detail: str, seconds: float):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({seconds:.1f} s)"
    cap = _capsys_holder.get("capsys")
    if cap is not None:
        with cap.disabled():
            print("\n" + line)
    else:
        print(line)


@pytest.fixture(autouse=True)
def _hold(capsys):
    _capsys_holder["capsys"] = capsys
    yield
    _capsys_holder.pop("capsys", None)


# ---------------------------------------------------------------- checks

def check_1():
    mismatches, inputs = 0, 0
    for bits in range(4, 13):
        m = generate_modulus_chain(2, 1, bits)[0]
        a = np.arange(1 << (2 * bits - 1), dtype=np.uint64)
        hi, lo = a >> np.uint64(bits), a & np.uint64((1 << bits) - 1)
        mismatches += int(np.count_nonzero(vec_reduce(hi, lo, m) != a % np.uint64(m.q)))
        inputs += a.size
    rng = np.random.default_rng(1)
    for m in generate_modulus_chain(2 ** 16, 32, 54):
        hi = rng.integers(0, 1 << 53, 10 ** 6, dtype=np.uint64)
        lo = rng.integers(0, 1 << 54, 10 ** 6, dtype=np.uint64)
        got = vec_reduce(hi, lo, m)
        want = ((hi.astype(object) << 54) + lo.astype(object)) % m.q
        mismatches += int(np.count_nonzero(got.astype(object) != want))
        inputs += hi.size
    return mismatches == 0, f"{mismatches} mismatches over {inputs} reductions", 60


def check_2():
    from fabhe.ntt import Poly, ntt_forward, ntt_inverse
    rng = np.random.default_rng(2)
    bad = 0
    for logN in range(4, 17):
        for bits in (30, 54):
            m = generate_modulus_chain(2 ** logN, 1, bits)[0]
            x = rng.integers(0, m.q, 2 ** logN, dtype=np.uint64)
            bad += not np.array_equal(ntt_inverse(ntt_forward(x, m), m), x)
    for logN in range(2, 7):
        N = 2 ** logN
        moduli = generate_modulus_chain(N, 1, 30) + generate_modulus_chain(N, 1, 54)
        a, b = rng.integers(-2 ** 20, 2 ** 20, N), rng.integers(-2 ** 20, 2 ** 20, N)
        c = (Poly.from_ints(a, moduli, ntt=True) * Poly.from_ints(b, moduli, ntt=True)).to_coeff()
        full = np.zeros(2 * N, dtype=object)
        for i in range(N):
            full[i:i + N] += int(a[i]) * b.astype(object)
        want = full[:N] - full[N:]
        for i, m in enumerate(moduli):
            bad += c.data[i].tolist() != [int(v) % m.q for v in want]
    return bad == 0, f"{bad} failures (roundtrip N=2^4..2^16, schoolbook N<=64)", 60


def check_3():
    p = SchemeParams(N=2 ** 12, logq=54, L=11, dnum=3)
    keys = ckks.keygen(p, 3)
    rng = np.random.default_rng(3)
    diff = 0
    for i in range(100):
        level = p.L + 1 - (i % (p.L + 1))
        ct_a = uniform_poly(rng, p.level_moduli(level), p.N)
        a1, b1 = KS.key_switch(ct_a, keys.relin, p, KS.KeySwitchPlan(p, "modified"))
        a2, b2 = KS.key_switch(ct_a, keys.relin, p, KS.KeySwitchPlan(p, "reference"))
        diff += not (np.array_equal(a1.data, a2.data) and np.array_equal(b1.data, b2.data))
    return diff == 0, f"{diff}/100 ciphertexts differ between datapaths", 300


def check_4():
    P = paper_params()
    l, k = P.alpha, P.L + 1
    src = P.raised_moduli(P.L + 1)[:l]
    dst = P.raised_moduli(P.L + 1)[l:l + k]
    fast, naive = OpCounter(), OpCounter()
    x = np.zeros((l, 4), dtype=np.uint64)
    basis_convert(x, src, dst, fast)
    KS.basis_convert_naive(x, src, dst, naive)
    ok = fast.modmul == l * (k + 1) and naive.modmul == 2 * l * k
    return ok, f"l={l} k={k}: {fast.modmul} vs naive {naive.modmul} mults", 1


def check_5():
    P = paper_params()
    ct, key = pm.ct_bytes(P) / 1e6, pm.key_bytes(P) / 1e6
    ok = abs(ct - 28.3) <= 0.1 and abs(key - 84.9) <= 0.5
    return ok, f"ciphertext {ct:.2f} MB, key {key:.2f} MB", 1


def check_6():
    P = paper_params()
    lb, after = B.boot_depth(P.fft_iter), P.levels_after_bootstrap
    return lb == 17 and after == 6, f"L_boot {lb}, levels after bootstrap {after}", 1


# mean precision baseline at N=2^14 was 12.54 bits; frozen as the regression bound
BOOT_BITS = 12.0


def check_7():
    p = SchemeParams(N=2 ** 14, logq=30, L=23, dnum=3, delta=2.0 ** 28, n_slots=64, ext_limbs=9)
    assert max(m.q for m in p.q_moduli).bit_length() <= 30
    cfg = B.BootstrapConfig(p, **lr.BOOT_DEFAULTS)
    keys = ckks.keygen(p, 1)
    bkeys = B.bootstrap_keygen(cfg, keys, 2)
    rng = np.random.default_rng(3)
    z = rng.uniform(-1, 1, 64) + 1j * rng.uniform(-1, 1, 64)
    out = B.bootstrap(ckks.encrypt_values(z, keys, level=1, rng=rng), cfg, keys, bkeys)
    bits = -np.log2(np.mean(np.abs(ckks.decrypt_values(out, keys.sk) - z)))
    return bits >= BOOT_BITS, f"mean precision {bits:.2f} bits (bound {BOOT_BITS})", 1800


def check_8():
    P = paper_params()
    mod = KS.schedule(P, P.L + 1, "modified").peak_bytes
    ref = KS.schedule(P, P.L + 1, "reference").peak_bytes
    naive = pm.naive_residency_bytes(P)
    ok = mod <= 43e6 < min(ref, naive)
    return ok, (f"modified peak {mod / 1e6:.1f} MB, reference {ref / 1e6:.1f} MB, "
                f"all keys + ct {naive / 1e6:.1f} MB"), 1


REFERENCE = {"Add": 0.04e-3, "Mult": 1.71e-3, "Rescale": 0.19e-3, "Rotate": 1.57e-3,
             "boot_amortized": 0.477e-6, "lr_1": 0.103, "lr_8": 0.081}


def check_9():
    P = paper_params()
    model = {op: pm.estimate_op_time(op, P) for op in ("Add", "Mult", "Rescale", "Rotate")}
    model["boot_amortized"] = pm.estimate_bootstrap(P).amortized_s
    model["lr_1"] = pm.estimate_lr(1).seconds
    model["lr_8"] = pm.estimate_lr(8).seconds
    ratios = {k: model[k] / REFERENCE[k] for k in REFERENCE}
    ok = all(0.5 <= r <= 1.5 for r in ratios.values())
    return ok, "model/reference " + ", ".join(f"{k} {r:.2f}" for k, r in ratios.items()), 1


def check_10():
    rows = pm.explore_params()
    ok = True
    for it in (1, 2, 3, 4, 5):
        col = sorted((r for r in rows if r["fftIter"] == it), key=lambda r: r["dnum"])
        ok &= all(a["key_mb"] < b["key_mb"] for a, b in zip(col, col[1:]))
        ok &= all(a["levels_after"] <= b["levels_after"] for a, b in zip(col, col[1:]))
    curve = {r["fftIter"]: r["amortized_us"] for r in rows if r["dnum"] == 3}
    best = min(curve, key=curve.get)
    ok &= best in (3, 4)
    return ok, f"monotone in dnum: {ok}; amortized minimum at fftIter={best}", 10


def check_11():
    X, y = lr.load_dataset()
    cfg = lr.LrConfig()
    train_idx, hold_idx = lr.split(len(X), cfg.holdout, cfg.seed)
    Xp = lr.preprocess(X, train_idx)
    shadow = lr.train_shadow(Xp, y, train_idx, cfg)
    run = lr.train_encrypted(Xp, y, train_idx, cfg, lr.lr_params(), seed=cfg.seed)
    Xh = Xp[hold_idx]
    agree = float(np.mean(np.sign(Xh @ run.weights[-1]) == np.sign(Xh @ shadow.weights[-1])))
    used = {a - b for a, b in run.levels}
    ok = agree >= 0.99 and used == {5} and len(run.levels) == 10 and X.shape[0] == 2000
    return ok, f"agreement {agree:.4f} on {len(hold_idx)} holdout samples, levels per iteration {sorted(used)}", 3600


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 12)}


def run_criterion(n: int) -> bool:
    t0 = time.time()
    try:
        ok, detail, budget = CHECKS[n]()
    except Exception as e:          # noqa: BLE001 - reported as a FAIL line
        ok, detail, budget = False, f"{type(e).__name__}: {e}", 0
    dt = time.time() - t0
    if budget and dt > budget:
        ok, detail = False, detail + f"; over the {budget} s budget"
    report(n, ok, detail, dt)
    return ok


@pytest.mark.parametrize("n", [1, 2, 4, 5, 6, 8, 9, 10])
def test_criterion(n):
    assert run_criterion(n)


@pytest.mark.slow
@pytest.mark.parametrize("n", [3, 7, 11])
def test_criterion_slow(n):
    assert run_criterion(n)


if __name__ == "__main__":
    import sys
    results = [run_criterion(n) for n in range(1, 12)]
    sys.exit(0 if all(results) else 1)
