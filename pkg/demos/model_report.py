"""Accelerator cost model at the default parameters."""
from fabhe import paper_params
from fabhe import perf_model as pm

P = paper_params()
print(f"ciphertext {pm.ct_bytes(P) / 1e6:.1f} MB, switching key {pm.key_bytes(P) / 1e6:.1f} MB "
      f"({pm.key_bytes(P, compressed=True) / 1e6:.1f} MB compressed)")
for op in ("Add", "Mult", "Rescale", "Rotate"):
    print(f"{op:8s} {pm.estimate_op_time(op, P) * 1e3:.3f} ms")

for N in (2 ** 14, 2 ** 16):
    print(f"NTT/s at N={N}: {pm.ntt_ops_per_second(N):,.0f} per limb, "
          f"{pm.ntt_ops_per_second(N, limbs_per_op=P.L + 1):,.0f} per {P.L + 1}-limb polynomial")

print("\nbootstrap")
print(pm.estimate_bootstrap(P))

for d in (1, 8):
    print(f"\nLR iteration on {d} device(s): {pm.estimate_lr(d).seconds:.4f} s")

print("\nexplorer, dnum=3")
for r in pm.explore_params(dnums=(3,)):
    print(f"  fftIter {r['fftIter']}: {r['levels_after']} levels left, {r['amortized_us']:.3f} us/slot")
