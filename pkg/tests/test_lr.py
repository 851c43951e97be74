import numpy as np
import pytest

from fabhe import ckks
from fabhe import lr
from fabhe.ops import CkksOps, SymCt, TraceOps


@pytest.fixture(scope="module")
def data():
    X, y = lr.load_dataset()
    tr, ho = lr.split(len(X), 400, 0)
    return lr.preprocess(X, tr), y, tr, ho


def test_sigmoid_fit_matches_helr_cubic():
    # widely used least-squares cubic on [-8, 8]: 0.5 + 0.15012 t - 0.001593 t^3
    c = lr.sigmoid_poly()
    assert c[0] == pytest.approx(0.5)
    assert c[1] == pytest.approx(0.15012, rel=2e-3)
    assert c[2] == 0.0
    assert c[3] == pytest.approx(-0.001593, rel=5e-3)


def test_nesterov_schedule():
    etas = lr.nesterov_etas(3)
    assert etas[0] == 0.0
    assert etas[1] == pytest.approx(-0.28175, abs=1e-5)
    assert all(e <= 0 for e in etas)


def test_dataset_shape():
    X, y = lr.load_dataset()
    assert X.shape == (2000, lr.N_FEATURES)
    assert set(np.unique(y)) == {-1.0, 1.0}
    assert 0 <= X.min() and X.max() <= 255


def test_dataset_rejects_bad_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1," + ",".join(["0"] * 10) + "\n")
    with pytest.raises(ValueError):
        lr.load_dataset(p)
    p.write_text("2," + ",".join(["0"] * lr.N_FEATURES) + "\n")
    with pytest.raises(ValueError):
        lr.load_dataset(p)


def test_preprocess_layout(data):
    Xp, _, tr, _ = data
    assert Xp.shape == (2000, 256)
    assert np.all(np.abs(Xp) <= 1.0)
    assert np.all(Xp[:, lr.N_FEATURES] == 1.0)
    assert np.all(Xp[:, lr.N_FEATURES + 1:] == 0.0)
    with pytest.raises(ValueError):
        lr.preprocess(np.zeros((3, 196)), [0], width=128)


def test_split_disjoint():
    tr, ho = lr.split(100, 20, 1)
    assert len(ho) == 20 and not set(tr) & set(ho)
    assert sorted(np.concatenate([tr, ho]).tolist()) == list(range(100))


def test_packing():
    pack = lr.LrPacking(1024, 256)
    assert pack.samples_per_ct == 4
    Zt = np.arange(5 * 256).reshape(5, 256)
    cts = pack.pack(Zt)
    assert len(cts) == 2
    assert np.all(cts[1][256:] == 0) and cts[1][0] == Zt[4, 0]
    assert pack.mask().sum() == 4
    with pytest.raises(ValueError):
        lr.LrPacking(1024, 200)


def test_shadow_accuracy(data):
    Xp, y, tr, ho = data
    run = lr.train_shadow(Xp, y, tr, lr.LrConfig())
    w = run.weights[-1]
    assert len(run.weights) == 10
    assert lr.accuracy(w, Xp[ho], y[ho]) > 0.90
    # inputs to the sigmoid stay on the fitted interval
    assert np.max(np.abs(Xp[tr] @ w)) <= 8.0
    assert lr.loss(w, Xp[ho], y[ho]) < lr.loss(np.zeros_like(w), Xp[ho], y[ho])


def test_iteration_uses_five_levels():
    pack = lr.LrPacking(2 ** 15, 256)
    t = TraceOps(2 ** 16)
    u = SymCt(10, 256)
    out = lr.lr_iteration(t, u, [SymCt(10, pack.slots)] * 3, pack, -0.3, 1.0, 384)
    assert u.level - out.level == lr.LEVELS_PER_ITERATION == 5
    assert out.n_slots == 256


def test_encrypted_iteration_matches_shadow(data):
    from fabhe.params import SchemeParams
    Xp, y, tr, _ = data
    # extra extension limbs keep the ModUp overflow term far below the scale
    p = SchemeParams(N=2 ** 11, logq=30, L=6, dnum=3, delta=2.0 ** 26, n_slots=256, ext_limbs=6)
    pack = lr.LrPacking(p.N // 2, 256)
    keys = ckks.keygen(p, 5)
    left, right = lr.lr_rotations(pack)
    rng = np.random.default_rng(6)
    keys.add_rotations(left, rng, left=True)
    keys.add_rotations(right, rng)
    cw = 0.25
    w = rng.uniform(-0.5, 0.5, 256)
    v = rng.uniform(-0.5, 0.5, 256)
    idx = tr[:8]
    Zt = y[idx, None] * Xp[idx]
    eta, gamma = -0.28, 4.0
    u = ckks.encrypt_values(cw * (w + 1j * v), keys, rng=rng, n_slots=256)
    cts = [ckks.encrypt_values(d, keys, rng=rng, n_slots=pack.slots) for d in pack.pack(Zt)]
    out = lr.lr_iteration(CkksOps(keys), u, cts, pack, eta, gamma, len(idx), weight_scale=cw)
    assert u.level - out.level == 5
    got = ckks.decrypt_values(out, keys.sk) / cw
    w_new, v_new = lr.shadow_iteration(w, v, Zt, eta, gamma)
    assert np.max(np.abs(got.real - w_new)) < 1e-3
    assert np.max(np.abs(got.imag - v_new)) < 1e-3
