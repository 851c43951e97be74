"""Encrypt, multiply, rotate and decrypt at a small ring."""
import numpy as np

from fabhe import ckks
from fabhe.params import SchemeParams

p = SchemeParams(N=2 ** 12, logq=40, L=5, dnum=2, delta=2.0 ** 30)
keys = ckks.keygen(p, seed=1, rotations=(1,))
rng = np.random.default_rng(0)

x = rng.uniform(-1, 1, p.slots)
y = rng.uniform(-1, 1, p.slots)
cx = ckks.encrypt_values(x, keys, rng=rng)
cy = ckks.encrypt_values(y, keys, rng=rng)

prod = ckks.mult(cx, cy, keys)          # relinearizes and rescales
rot = ckks.rotate(prod, 1, keys)        # slot j -> j + 1
got = ckks.decrypt_values(rot, keys.sk).real

want = np.roll(x * y, 1)
print(f"level {cx.level} -> {rot.level}")
print(f"max error {np.max(np.abs(got - want)):.2e}")
