"""Command-line entry point: ``fabhe <command> [options]``.

Every command reads a RunConfig from built-in defaults, an optional JSON
``--config`` file and command-line flags (in that order of precedence);
the ``FAB_SEED`` environment variable overrides the seed last.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import ckks, perf_model as pm, serialize as ser
from .params import SchemeParams

MB = 1e6


@dataclass
class RunConfig:
    N: int = 2 ** 16
    logq: int = 54
    L: int = 23
    dnum: int = 3
    fft_iter: int = 4
    delta_bits: float = 44.0
    ext_limbs: int | None = None
    slots: int | None = None
    seed: int = 0
    datapath: str = "modified"
    devices: int = 1
    compressed: bool = True
    out: str | None = None

    def params(self) -> SchemeParams:
        if self.datapath not in ("modified", "reference"):
            raise ValueError(f"unknown datapath {self.datapath!r}")
        if self.devices < 1:
            raise ValueError("devices must be >= 1")
        return SchemeParams(N=self.N, logq=self.logq, L=self.L, dnum=self.dnum,
                            fft_iter=self.fft_iter, delta=2.0 ** self.delta_bits,
                            n_slots=self.slots, ext_limbs=self.ext_limbs)


# Desk-scale preset used by the commands that run real bootstrapping.
DESK = dict(N=2 ** 14, logq=30, L=23, dnum=3, fft_iter=4, delta_bits=28.0, ext_limbs=9)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--preset", choices=("paper", "desk"), help="starting parameter set")
    p.add_argument("--N", type=int)
    p.add_argument("--logq", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--dnum", type=int)
    p.add_argument("--fft-iter", dest="fft_iter", type=int)
    p.add_argument("--delta-bits", dest="delta_bits", type=float)
    p.add_argument("--ext-limbs", dest="ext_limbs", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--datapath", choices=("modified", "reference"))
    p.add_argument("--devices", type=int)
    p.add_argument("--uncompressed", dest="compressed", action="store_false", default=None)
    p.add_argument("--out")


def resolve_config(args, preset: str = "paper", env=None) -> RunConfig:
    env = os.environ if env is None else env
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    if (getattr(args, "preset", None) or preset) == "desk":
        for k, v in DESK.items():
            setattr(cfg, k, v)
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for k in names:
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    if env.get("FAB_SEED"):
        cfg.seed = int(env["FAB_SEED"])
    cfg.params()          # validate early
    return cfg


# ---------------------------------------------------------------- keygen

def cmd_keygen(args) -> int:
    cfg = resolve_config(args)
    p = cfg.params()
    out = Path(cfg.out or "keys")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    ks = ckks.keygen(p, cfg.seed, rotations=args.rotations or (), compressed=cfg.compressed)
    files = {"secret.fab": ks.sk, "public.fab": ks.pk, "relin.fab": ks.relin}
    for g, k in sorted(ks.galois.items()):
        files[f"galois_{g}.fab"] = k
    total = 0
    for name, obj in files.items():
        n = ser.save(out / name, obj, p)
        total += n
        print(f"{name:24s} {n / MB:10.3f} MB")
    print(f"keygen {time.time() - t0:.1f} s, files {total / MB:.3f} MB in {out}")
    print(f"modeled switching key ({'compressed' if cfg.compressed else 'uncompressed'}, "
          f"{p.logq}-bit packing): {pm.key_bytes(p, cfg.compressed) / MB:.2f} MB")
    return 0


def _load_keys(path: Path, params: SchemeParams | None = None) -> ckks.KeySet:
    sk, p = ser.load(path / "secret.fab", params)
    pk, _ = ser.load(path / "public.fab", p)
    relin, _ = ser.load(path / "relin.fab", p)
    ks = ckks.KeySet(p, sk, pk, relin)
    for f in sorted(path.glob("galois_*.fab")):
        ks.galois[int(f.stem.split("_")[1])] = ser.load(f, p)[0]
    return ks


# ---------------------------------------------------------------- bench-ops

def _best(fn, reps: int) -> float:
    out = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)


def cmd_bench_ops(args) -> int:
    cfg = resolve_config(args)
    p = cfg.params()
    if args.keys:
        ks = _load_keys(Path(args.keys), p)
    else:
        ks = ckks.keygen(p, cfg.seed, datapath=cfg.datapath)
    ks.datapath = cfg.datapath
    ks.add_rotations([1], np.random.default_rng(cfg.seed + 1), left=True)
    rng = np.random.default_rng(cfg.seed + 2)
    n = p.slots
    u = rng.uniform(-1, 1, n)
    v = rng.uniform(-1, 1, n)
    cu = ckks.encrypt_values(u, ks, rng=rng)
    cv = ckks.encrypt_values(v, ks, rng=rng)
    prod = ckks.mult(cu, cv, ks)
    ops = {
        "Add": lambda: ckks.add(cu, cv),
        "Mult": lambda: ckks.mult(cu, cv, ks),
        "Rescale": lambda: ckks.rescale(ckks.Ciphertext(cu.a, cu.b, cu.scale, p)),
        "Rotate": lambda: ckks.rotate_left(cu, 1, ks),
    }
    model_params = SchemeParams() if args.model_paper else p
    print(f"params N={p.N} logq={p.logq} L={p.L} dnum={p.dnum}; model at "
          f"N={model_params.N} logq={model_params.logq}")
    print(f"{'op':8s} {'measured_ms':>12s} {'model_ms':>10s}")
    rows = []
    for name, fn in ops.items():
        meas = _best(fn, args.reps) * 1e3
        model = pm.estimate_op_time(name, model_params) * 1e3
        rows.append((name, meas, model))
        print(f"{name:8s} {meas:12.3f} {model:10.3f}")
    print(f"mult level drop: {cu.level - prod.level}")
    err = np.max(np.abs(ckks.decrypt_values(prod, ks.sk).real - u * v))
    print(f"mult max error: {err:.2e}")
    per_limb = pm.ntt_ops_per_second(model_params.N)
    per_poly = pm.ntt_ops_per_second(model_params.N, limbs_per_op=model_params.L + 1)
    print(f"model NTT/s at N={model_params.N}: {per_limb:,.0f} per limb, {per_poly:,.0f} per polynomial")
    if cfg.out:
        Path(cfg.out).write_text("op,measured_ms,model_ms\n" +
                                 "".join(f"{a},{b:.4f},{c:.4f}\n" for a, b, c in rows))
    return 0


# ---------------------------------------------------------------- bootstrap

def cmd_bootstrap(args) -> int:
    from .bootstrap import BootstrapConfig, bootstrap, bootstrap_keygen
    from .lr import BOOT_DEFAULTS
    cfg = resolve_config(args, preset="desk")
    if cfg.slots is None:
        cfg.slots = 64
    p = cfg.params()
    t0 = time.time()
    bcfg = BootstrapConfig(p, **BOOT_DEFAULTS)
    ks = ckks.keygen(p, cfg.seed, datapath=cfg.datapath)
    bk = bootstrap_keygen(bcfg, ks, cfg.seed + 1)
    print(f"keygen {time.time() - t0:.1f} s ({len(ks.galois)} Galois keys)")
    rng = np.random.default_rng(cfg.seed + 2)
    z = rng.uniform(-1, 1, p.slots) + 1j * rng.uniform(-1, 1, p.slots)
    ct = ckks.encrypt_values(z, ks, level=1, rng=rng)
    t0 = time.time()
    out = bootstrap(ct, bcfg, ks, bk)
    wall = time.time() - t0
    err = np.abs(ckks.decrypt_values(out, ks.sk) - z)
    print(f"bootstrap wall {wall:.1f} s, levels after {out.level - 1}")
    print(f"precision mean {-np.log2(err.mean()):.2f} bits, worst {-np.log2(err.max()):.2f} bits")
    model = pm.estimate_bootstrap(SchemeParams())
    print(f"modeled FAB bootstrap (N=2^16, n=2^15): {model.seconds * 1e3:.1f} ms, "
          f"amortized mult {model.amortized_s * 1e6:.3f} us/slot")
    return 0


# ---------------------------------------------------------------- explore

def cmd_explore(args) -> int:
    cfg = resolve_config(args)
    rows = pm.explore_params(dnums=tuple(args.dnums), fft_iters=tuple(args.fft_iters),
                             N=cfg.N, logq=cfg.logq, log_pq=args.log_pq)
    text = pm.rows_to_csv(rows)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- lr-train

def cmd_lr_train(args) -> int:
    from . import lr
    cfg = resolve_config(args, preset="desk")
    X, y = lr.load_dataset(args.data)
    if args.samples and args.samples < len(X):
        keep = np.random.default_rng(cfg.seed).permutation(len(X))[:args.samples]
        X, y = X[keep], y[keep]
    lcfg = lr.LrConfig(iterations=args.iterations, minibatch=args.minibatch,
                       holdout=args.holdout, seed=cfg.seed)
    train_idx, hold_idx = lr.split(len(X), lcfg.holdout, cfg.seed)
    Xp = lr.preprocess(X, train_idx, width=args.width)
    shadow = lr.train_shadow(Xp, y, train_idx, lcfg)
    print(f"shadow holdout accuracy {lr.accuracy(shadow.weights[-1], Xp[hold_idx], y[hold_idx]):.4f}")
    est = pm.estimate_lr(cfg.devices, shape=pm.LrShape(features=args.width, weight_slots=args.width))
    print(f"modeled FAB time per iteration ({cfg.devices} device(s)): {est.seconds:.4f} s")
    if args.shadow_only:
        return 0
    p = lr.lr_params(N=cfg.N, features=args.width, logq=cfg.logq, L=cfg.L, dnum=cfg.dnum,
                     fft_iter=cfg.fft_iter, delta=2.0 ** cfg.delta_bits, ext_limbs=cfg.ext_limbs)
    log_rows = []

    def log(t, run):
        start, end = run.levels[-1]
        if start - end != lr.LEVELS_PER_ITERATION:
            raise RuntimeError(f"iteration {t} used {start - end} levels")
        w = run.weights[-1]
        le = lr.loss(w, Xp[train_idx], y[train_idx])
        ls = lr.loss(shadow.weights[t], Xp[train_idx], y[train_idx])
        log_rows.append((t, le, ls, start - end, run.seconds[-1]))
        print(f"iter {t:3d} loss enc {le:.5f} shadow {ls:.5f} levels {start - end} "
              f"time {run.seconds[-1]:.1f} s", flush=True)

    run = lr.train_encrypted(Xp, y, train_idx, lcfg, p, seed=cfg.seed, log=log,
                             devices=cfg.devices)
    w_enc, w_sh = run.weights[-1], shadow.weights[-1]
    Xh, yh = Xp[hold_idx], y[hold_idx]
    agree = np.mean(np.sign(Xh @ w_enc) == np.sign(Xh @ w_sh))
    print(f"total depth {sum(a - b for a, b in run.levels)} over {len(run.levels)} iterations")
    print(f"holdout accuracy enc {lr.accuracy(w_enc, Xh, yh):.4f} shadow {lr.accuracy(w_sh, Xh, yh):.4f}"
          f" agreement {agree:.4f}")
    if cfg.out:
        Path(cfg.out).write_text("iteration,enc_loss,shadow_loss,levels,seconds\n" + "".join(
            f"{t},{a:.6f},{b:.6f},{c},{d:.2f}\n" for t, a, b, c, d in log_rows))
    if args.weights_out:
        np.savetxt(args.weights_out, w_enc, delimiter=",")
    return 0


# ---------------------------------------------------------------- (de)serialize

def cmd_serialize(args) -> int:
    """Encrypt a CSV of real values under stored keys and write a FAB1 ciphertext."""
    ks = _load_keys(Path(args.keys))
    vals = np.loadtxt(args.values, delimiter=",", ndmin=1) if args.values else np.zeros(0)
    seed = int(os.environ.get("FAB_SEED", args.seed))
    if len(vals) > ks.params.slots:
        raise ValueError(f"{len(vals)} values exceed {ks.params.slots} slots")
    padded = np.zeros(ks.params.slots)
    padded[:len(vals)] = vals
    ct = ckks.encrypt_values(padded, ks, rng=np.random.default_rng(seed))
    n = ser.save(args.out, ct, ks.params)
    print(f"wrote {args.out}: {n} bytes, level {ct.level}")
    return 0


def cmd_deserialize(args) -> int:
    data = Path(args.path).read_bytes()
    try:
        kind, p, _ = ser.read_header(data)
        expected = _load_keys(Path(args.keys)).params if args.keys else None
        obj, p = ser.loads(data, expected)
    except ser.FormatError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    print(f"{kind}: {json.dumps(p.describe())}")
    if isinstance(obj, ckks.Ciphertext):
        print(f"level {obj.level}, scale 2^{np.log2(obj.scale):.2f}, slots {obj.n_slots}")
        if args.keys:
            vals = ckks.decrypt_values(obj, _load_keys(Path(args.keys)).sk).real
            np.savetxt(sys.stdout, vals[:args.show], fmt="%.6f")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fabhe", description="RNS-CKKS with a FAB cost model")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate and serialize keys")
    _add_config_flags(p)
    p.add_argument("--rotations", type=int, nargs="*")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("bench-ops", help="time Add/Mult/Rescale/Rotate next to the model")
    _add_config_flags(p)
    p.add_argument("--keys", help="key directory from keygen")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--model-paper", action="store_true",
                   help="model column at the default N=2^16 parameters")
    p.set_defaults(func=cmd_bench_ops)

    p = sub.add_parser("bootstrap", help="run a real bootstrap and report precision")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("explore", help="dnum / fftIter sweep as CSV")
    _add_config_flags(p)
    p.add_argument("--dnums", type=int, nargs="+", default=[1, 2, 3, 4, 6, 8, 12, 24])
    p.add_argument("--fft-iters", dest="fft_iters", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--log-pq", dest="log_pq", type=int, default=1728)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("lr-train", help="encrypted logistic-regression training")
    _add_config_flags(p)
    p.add_argument("--data", help="CSV (label first, 196 features); bundled MNIST 3/8 by default")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--minibatch", type=int, default=256)
    p.add_argument("--holdout", type=int, default=400)
    p.add_argument("--width", type=int, default=256, help="padded feature block")
    p.add_argument("--shadow-only", action="store_true")
    p.add_argument("--weights-out")
    p.set_defaults(func=cmd_lr_train)

    p = sub.add_parser("serialize", help="encrypt CSV values into a FAB1 ciphertext file")
    p.add_argument("--keys", required=True)
    p.add_argument("--values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_serialize)

    p = sub.add_parser("deserialize", help="check and describe a FAB1 file")
    p.add_argument("path")
    p.add_argument("--keys", help="key directory; enables the params check and decryption")
    p.add_argument("--show", type=int, default=8)
    p.set_defaults(func=cmd_deserialize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ckks.MissingKey) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
