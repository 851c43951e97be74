"""Encrypted logistic-regression training (minibatch Nesterov ascent).

Packing: a data ciphertext holds ``slots / features`` samples, one block of
``features`` slots per sample (features padded with a bias term and zeros).
The weights live in a ``features``-slot ciphertext; viewed in the data
ciphertext's slot space it repeats once per block, so one slot-wise product
multiplies every sample by the weights.

The weight state is one ciphertext u = c_w (w + i v).  An iteration unpacks
it with a conjugation, computes the gradient with a cubic sigmoid and repacks
the Nesterov update; it consumes exactly five levels, after which u is
bootstrapped.  :func:`shadow_iteration` repeats the same arithmetic in the
clear.
"""
from __future__ import annotations

import gzip
import io
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

LEVELS_PER_ITERATION = 5
N_FEATURES = 196


def sigmoid_poly(degree: int = 3, bound: float = 8.0, samples: int = 20001) -> np.ndarray:
    """Least-squares fit of 1/(1+e^-t) on [-bound, bound]; coefficients low to high."""
    t = np.linspace(-bound, bound, samples)
    c = np.polynomial.polynomial.polyfit(t, 1.0 / (1.0 + np.exp(-t)), degree)
    c[2::2] = 0.0          # sigmoid - 1/2 is odd
    return c


# ---------------------------------------------------------------- data

def load_dataset(path=None):
    """(X, y) from a label-first CSV (optionally gzipped); labels must be +-1."""
    if path is None:
        raw = resources.files("fabhe").joinpath("data/mnist38_14x14.csv.gz").read_bytes()
        text = gzip.decompress(raw).decode()
    else:
        path = str(path)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rt") as f:
            text = f.read()
    a = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
    if a.shape[1] != N_FEATURES + 1:
        raise ValueError(f"expected {N_FEATURES} features, got {a.shape[1] - 1}")
    y = a[:, 0]
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return a[:, 1:], y


def split(n: int, holdout: int, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(n)
    return perm[holdout:], perm[:holdout]


def preprocess(X: np.ndarray, train_idx, width: int = 256, spread: float = 4.0) -> np.ndarray:
    """Standardize on the training rows, shrink into [-1, 1], append a bias, zero-pad to ``width``."""
    X = X / 255.0
    mu = X[train_idx].mean(0)
    sd = X[train_idx].std(0) + 0.05
    Z = np.clip((X - mu) / sd / spread, -1.0, 1.0)
    if Z.shape[1] + 1 > width:
        raise ValueError("feature block too narrow")
    out = np.zeros((len(X), width))
    out[:, :Z.shape[1]] = Z
    out[:, Z.shape[1]] = 1.0
    return out


# ---------------------------------------------------------------- packing

@dataclass(frozen=True)
class LrPacking:
    slots: int                  # slots of a data ciphertext
    features: int = 256

    def __post_init__(self):
        if self.features & (self.features - 1) or self.slots % self.features:
            raise ValueError("features must be a power of two dividing the slot count")

    @property
    def samples_per_ct(self) -> int:
        return self.slots // self.features

    def pack(self, Zt: np.ndarray) -> list:
        """Row-major blocks; the last ciphertext is zero-filled."""
        per = self.samples_per_ct
        out = []
        for s in range(0, len(Zt), per):
            v = np.zeros(self.slots)
            blk = Zt[s:s + per]
            v[:blk.size] = blk.ravel()
            out.append(v)
        return out

    def mask(self) -> np.ndarray:
        m = np.zeros(self.slots)
        m[::self.features] = 1.0
        return m


@dataclass
class LrConfig:
    iterations: int = 10
    minibatch: int = 256
    gamma0: float = 10.0
    weight_scale: float = 0.25      # c_w: keeps |w + i v| inside the bootstrap range
    degree: int = 3
    bound: float = 8.0
    holdout: int = 400
    seed: int = 0

    def gamma(self, t: int) -> float:
        return self.gamma0 / (t + 1)

    def coeffs(self) -> np.ndarray:
        return sigmoid_poly(self.degree, self.bound)


def nesterov_etas(iterations: int) -> list:
    lam, out = 1.0, []
    for _ in range(iterations):
        nxt = (1 + math.sqrt(1 + 4 * lam * lam)) / 2
        out.append((1 - lam) / nxt)
        lam = nxt
    return out


def minibatches(train_idx, size: int, iterations: int) -> list:
    n = len(train_idx)
    return [np.asarray(train_idx)[(np.arange(size) + t * size) % n] for t in range(iterations)]


# ---------------------------------------------------------------- one iteration

def lr_iteration(ops, u, data: list, pack: LrPacking, eta: float, gamma: float,
                 batch: int, coeffs=None, weight_scale: float = 0.25, partial_sums: int = 1):
    """One update on the packed state u = c_w (w + i v); returns the new u (five levels lower).

    ``data`` holds the minibatch ciphertexts (labels folded in, level of u).
    ``partial_sums`` > 1 groups the per-ciphertext gradients as separate
    workers would before the final reduction.
    """
    c = sigmoid_poly() if coeffs is None else np.asarray(coeffs)
    a0, a1, a3 = c[0], c[1], c[3]
    top = ops.level(u)
    f, n = pack.features, pack.slots
    kappa = weight_scale * gamma / batch
    N = _ring_degree(ops, u)

    uc = ops.conjugate(u)
    W = ops.add(u, uc)                                          # 2 c_w w
    V = ops.mult_monomial(ops.sub(u, uc), 3 * N // 2)           # 2 c_w v

    grads = []
    for D in data:
        P = ops.mult(D, V)                                      # top - 1
        k = 1
        while k < f:
            P = ops.add(P, ops.rotate_left(P, k))
            k *= 2
        Z = ops.mult_const(P, pack.mask() / (2 * weight_scale))  # top - 2: z at block starts
        k = 1
        while k < f:
            Z = ops.add(Z, ops.rotate(Z, k))
            k *= 2
        Z2 = ops.mult(Z, Z)                                     # top - 3
        Da = ops.mult_const(D, -a1 * kappa, top - 2)
        Db = ops.mult_const(D, -a3 * kappa, top - 2)
        A = ops.mult(Z, Da)
        B = ops.mult(Z, Db)
        C = ops.mult(Z2, B)                                     # top - 4
        Dc = ops.mult_const(D, a0 * kappa, top - 4)
        grads.append(ops.add(ops.add(C, ops.level_down(A, top - 4)), Dc))

    groups = [grads[i::partial_sums] for i in range(partial_sums)]
    parts = [_sum(ops, g) for g in groups if g]
    G = _sum(ops, parts)
    k = f
    while k < n:                                                # fold the sample blocks
        G = ops.add(G, ops.rotate_left(G, k))
        k *= 2
    G = ops.with_slots(G, f)

    w_new = ops.add(ops.mult_const(V, 0.5, top - 4), G)          # c_w w_{t+1}, top - 4
    u_new = ops.add(ops.mult_const(w_new, complex(1.0, 1.0 - eta), top - 5),
                    ops.mult_const(W, complex(0.0, eta / 2), top - 5))
    return u_new


def _sum(ops, xs):
    out = xs[0]
    for x in xs[1:]:
        out = ops.add(out, x)
    return out


def _ring_degree(ops, u):
    return getattr(ops, "N", None) or u.params.N


def shadow_iteration(w: np.ndarray, v: np.ndarray, Zt: np.ndarray, eta: float, gamma: float,
                     coeffs=None):
    """Cleartext twin of :func:`lr_iteration` on label-folded rows ``Zt``."""
    c = sigmoid_poly() if coeffs is None else np.asarray(coeffs)
    z = Zt @ v
    s = c[0] - c[1] * z - c[3] * z ** 3
    g = (s[:, None] * Zt).sum(0) / len(Zt)
    w_new = v + gamma * g
    v_new = (1 - eta) * w_new + eta * w
    return w_new, v_new


def loss(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.log1p(np.exp(-y * (X @ w)))))


def accuracy(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.where(X @ w >= 0, 1, -1) == y))


# ---------------------------------------------------------------- training drivers

@dataclass
class LrRun:
    weights: list = field(default_factory=list)      # per iteration
    levels: list = field(default_factory=list)       # (level at start, level before bootstrap)
    seconds: list = field(default_factory=list)


def train_shadow(X: np.ndarray, y: np.ndarray, train_idx, cfg: LrConfig) -> LrRun:
    run = LrRun()
    w = np.zeros(X.shape[1])
    v = w.copy()
    for t, (idx, eta) in enumerate(zip(minibatches(train_idx, cfg.minibatch, cfg.iterations),
                                       nesterov_etas(cfg.iterations))):
        w, v = shadow_iteration(w, v, y[idx, None] * X[idx], eta, cfg.gamma(t), cfg.coeffs())
        run.weights.append(w.copy())
    return run


def lr_params(N: int = 2 ** 14, features: int = 256, **kw):
    """Desk parameter set: 30-bit limbs, weights bootstrapped as a ``features``-slot ciphertext."""
    from .params import SchemeParams
    base = dict(N=N, logq=30, L=23, dnum=3, fft_iter=4, delta=2.0 ** 28, n_slots=features,
                ext_limbs=9)
    base.update(kw)
    return SchemeParams(**base)


def lr_rotations(pack: LrPacking) -> tuple:
    """(left steps, right steps) the iteration uses."""
    left = [1 << i for i in range(pack.features.bit_length() - 1)]
    left += [pack.features << i for i in range((pack.samples_per_ct).bit_length() - 1)]
    right = [1 << i for i in range(pack.features.bit_length() - 1)]
    return left, right


def train_encrypted(X: np.ndarray, y: np.ndarray, train_idx, cfg: LrConfig, params=None,
                    seed: int = 0, log=None, devices: int = 1) -> LrRun:
    """Full encrypted run; returns decrypted weights per iteration and the level audit."""
    import time

    from . import ckks
    from .bootstrap import BootstrapConfig, bootstrap_keygen
    from .ops import CkksOps
    from .params import SchemeParams

    params = params or lr_params(features=X.shape[1])
    if not isinstance(params, SchemeParams):
        raise TypeError("params must be SchemeParams")
    pack = LrPacking(params.N // 2, X.shape[1])
    keys = ckks.keygen(params, seed)
    left, right = lr_rotations(pack)
    rng = np.random.default_rng(seed + 1)
    keys.add_rotations(left, rng, left=True)
    keys.add_rotations(right, rng)
    bcfg = BootstrapConfig(params, **BOOT_DEFAULTS)
    bkeys = bootstrap_keygen(bcfg, keys, seed + 2)
    ops = CkksOps(keys, (bcfg, bkeys))
    top = bcfg.level_out()

    run = LrRun()
    u = ckks.encrypt_values(np.zeros(pack.features), keys, level=top, rng=rng, n_slots=pack.features)
    for t, (idx, eta) in enumerate(zip(minibatches(train_idx, cfg.minibatch, cfg.iterations),
                                       nesterov_etas(cfg.iterations))):
        t0 = time.time()
        Zt = y[idx, None] * X[idx]
        data = [ckks.encrypt_values(v, keys, level=top, rng=rng, n_slots=pack.slots)
                for v in pack.pack(Zt)]
        start = u.level
        u = lr_iteration(ops, u, data, pack, eta, cfg.gamma(t), len(idx), cfg.coeffs(),
                         weight_scale=cfg.weight_scale, partial_sums=devices)
        run.levels.append((start, u.level))
        u = ops.bootstrap(u)
        vals = ckks.decrypt_values(u, keys.sk) / cfg.weight_scale
        run.weights.append(vals.real.copy())
        run.seconds.append(time.time() - t0)
        if log:
            log(t, run)
    return run


# Desk bootstrap settings.  With h = 8 the ModRaise overflow obeys |I| <= (h+1)/2,
# so K = 5 covers it deterministically.
BOOT_DEFAULTS = dict(K=5.0, arcsine_order=7, sparse_h=8)
