"""Bootstrap 64 slots at N=2^10 with 30-bit limbs (under a minute)."""
import time

import numpy as np

from fabhe import bootstrap as B
from fabhe import ckks
from fabhe.lr import BOOT_DEFAULTS
from fabhe.params import SchemeParams

p = SchemeParams(N=2 ** 10, logq=30, L=23, dnum=3, delta=2.0 ** 28, n_slots=64, ext_limbs=9)
cfg = B.BootstrapConfig(p, **BOOT_DEFAULTS)
keys = ckks.keygen(p, 1)
bkeys = B.bootstrap_keygen(cfg, keys, 2)

rng = np.random.default_rng(3)
z = rng.uniform(-1, 1, 64) + 1j * rng.uniform(-1, 1, 64)
ct = ckks.encrypt_values(z, keys, level=1, rng=rng)

t0 = time.time()
out = B.bootstrap(ct, cfg, keys, bkeys)
err = np.abs(ckks.decrypt_values(out, keys.sk) - z)
print(f"level {ct.level} -> {out.level} in {time.time() - t0:.1f} s")
print(f"precision mean {-np.log2(err.mean()):.2f} bits, worst {-np.log2(err.max()):.2f} bits")
