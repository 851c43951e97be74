"""Scheme parameters, modulus chain layout and noise samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ntt import Poly
from .rns import generate_modulus_chain, make_modulus

# log2(PQ) ceilings for 128-bit security with ternary secrets, indexed by N.
SECURITY_LOGPQ = {2 ** 10: 27, 2 ** 11: 54, 2 ** 12: 109, 2 ** 13: 218,
                  2 ** 14: 438, 2 ** 15: 881, 2 ** 16: 1728}


@dataclass(frozen=True)
class SchemeParams:
    """RNS-CKKS parameter set.

    ``L + 1`` original limbs q_0..q_L form Q, ``ext_limbs`` (alpha by default)
    extension limbs form P.  ``delta`` is the scale at the bottom level; the
    scales of higher levels follow from it (see ``canonical_scale``).
    """
    N: int = 2 ** 16
    logq: int = 54
    L: int = 23
    dnum: int = 3
    fft_iter: int = 4
    delta: float = 2.0 ** 44
    n_slots: int | None = None
    ext_limbs: int | None = None
    logq0: int | None = None
    logp: int | None = None
    sigma: float = 3.2
    lam: int = 128
    shifts: int = 6
    modup_exact: bool = False

    def __post_init__(self):
        if self.N & (self.N - 1) or self.N < 4:
            raise ValueError("N must be a power of two")
        if not 1 <= self.dnum <= self.L + 1:
            raise ValueError("dnum out of range")
        n = self.slots
        if n & (n - 1) or 2 * n > self.N:
            raise ValueError("slot count must be a power of two <= N/2")

    @property
    def slots(self) -> int:
        return self.n_slots or self.N // 2

    @property
    def alpha(self) -> int:
        return -(-(self.L + 1) // self.dnum)

    @property
    def K(self) -> int:
        return self.alpha if self.ext_limbs is None else self.ext_limbs

    @property
    def raised_limbs(self) -> int:
        return self.L + 1 + self.K

    @property
    def log_pq(self) -> int:
        q0 = self.logq0 or self.logq
        return q0 + self.L * self.logq + self.K * (self.logp or self.logq)

    @property
    def secure(self) -> bool | None:
        cap = SECURITY_LOGPQ.get(self.N)
        return None if cap is None else self.log_pq <= cap

    @property
    def levels_after_bootstrap(self) -> int:
        """Multiplicative levels left after bootstrapping (limbs left minus one)."""
        return self.L - (2 * self.fft_iter + 9)

    @cached_property
    def chain(self) -> tuple:
        N = self.N
        ext = generate_modulus_chain(N, self.K, self.logp or self.logq, self.shifts)
        used = [m.q for m in ext]
        qs = []
        if self.logq0 and self.logq0 != self.logq:
            qs += [m.q for m in generate_modulus_chain(N, 1, self.logq0, self.shifts, exclude=used)]
        rest = self.L + 1 - len(qs)
        qs += [m.q for m in generate_modulus_chain(N, rest, self.logq, self.shifts, exclude=used + qs)]
        allq = qs + used
        return tuple(make_modulus(q, N, i, self.shifts) for i, q in enumerate(allq))

    @property
    def q_moduli(self) -> tuple:
        return self.chain[:self.L + 1]

    @property
    def p_moduli(self) -> tuple:
        return self.chain[self.L + 1:]

    def level_moduli(self, level: int) -> tuple:
        """Original limbs q_0..q_{level-1}."""
        return self.chain[:level]

    def raised_moduli(self, level: int) -> tuple:
        return self.chain[:level] + self.p_moduli

    @cached_property
    def P(self) -> int:
        return math.prod(m.q for m in self.p_moduli)

    @cached_property
    def canonical_scales(self) -> tuple:
        """Scale at each limb count; chosen so Delta_l^2 / q_{l-1} = Delta_{l-1}."""
        s = [0.0, float(self.delta)]
        for l in range(2, self.L + 2):
            s.append(math.sqrt(s[l - 1] * self.chain[l - 1].q))
        return tuple(s)

    def canonical_scale(self, level: int) -> float:
        return self.canonical_scales[level]

    def digits(self, level: int) -> list:
        """Contiguous blocks of alpha limb indices covering 0..level-1."""
        if level < 1:
            raise ValueError("nothing to decompose")
        a = self.alpha
        return [list(range(s, min(s + a, level))) for s in range(0, level, a)]

    def describe(self) -> dict:
        return dict(N=self.N, logq=self.logq, L=self.L, dnum=self.dnum, alpha=self.alpha,
                    ext_limbs=self.K, fft_iter=self.fft_iter, slots=self.slots,
                    log_pq=self.log_pq, delta_bits=math.log2(self.delta))


def paper_params(**kw) -> SchemeParams:
    return SchemeParams(**kw)


# ---------------------------------------------------------------- sampling

def ternary(rng: np.random.Generator, N: int, hamming: int | None = None) -> np.ndarray:
    if hamming is None:
        return rng.integers(-1, 2, N).astype(np.int64)
    s = np.zeros(N, dtype=np.int64)
    idx = rng.choice(N, size=hamming, replace=False)
    s[idx] = rng.choice(np.array([-1, 1]), size=hamming)
    return s


def gaussian(rng: np.random.Generator, N: int, sigma: float = 3.2) -> np.ndarray:
    e = np.rint(rng.normal(0.0, sigma, N))
    bound = math.ceil(6 * sigma)
    return np.clip(e, -bound, bound).astype(np.int64)


def uniform_poly(rng: np.random.Generator, moduli, N: int) -> Poly:
    data = np.stack([rng.integers(0, m.q, N, dtype=np.uint64) for m in moduli])
    return Poly(data, moduli, ntt=True)


def seeded_rng(seed: bytes, *tags: int) -> np.random.Generator:
    words = list(np.frombuffer(seed, dtype=np.uint32)) + list(tags)
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))
