import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from splineortho.knotseq import GridInterval, KnotSequence, dyadic_sequence, iter_grids, random_points  # noqa: E402
from splineortho.orthosys import build_system  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@lru_cache(maxsize=None)
def cached_system(kind: str, k: int, N: int, seed: int = 0):
    if kind == "dyadic":
        seq = dyadic_sequence(k, N - 1)
    else:
        seq = KnotSequence(k, tuple(random_points(N - 1, np.random.default_rng(seed))))
    return build_system(seq, N)


def random_chains(seq, ell, count, rng, n_max=None, length=None):
    """Strictly decreasing chains D^{(ell)}_{n_1,i_1} > D^{(ell)}_{n_2,i_2} > ... with n increasing."""
    n_max = seq.n_max if n_max is None else n_max
    grids = {g.n: g for g, _ in iter_grids(seq, n_max)}
    k = seq.k
    windows = {}
    for n, g in grids.items():
        start = np.arange(k - ell + 1, n + k)
        windows[n] = (start, g.tau[start - 1], g.tau[start - 1 + ell])
    length = 2 * ell if length is None else length
    out = []
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        n = int(rng.integers(2, max(3, n_max // 4)))
        idx, lo, hi = windows[n]
        j = int(rng.integers(idx.size))
        chain = [GridInterval(n, int(idx[j]), ell, float(lo[j]), float(hi[j]))]
        while len(chain) < length and n < n_max:
            n += int(rng.integers(1, 4))
            if n > n_max:
                break
            idx, lo, hi = windows[n]
            cur = chain[-1]
            ok = (lo >= cur.lo) & (hi <= cur.hi) & ((lo > cur.lo) | (hi < cur.hi))
            cand = np.flatnonzero(ok)
            if cand.size:
                j = int(rng.choice(cand))
                chain.append(GridInterval(n, int(idx[j]), ell, float(lo[j]), float(hi[j])))
        if len(chain) >= 2 * ell:
            out.append(chain)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
