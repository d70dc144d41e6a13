"""The chunked selective scan against the sequential reference, and the
cost of each.

    python demos/scan_equivalence.py
"""
import time

import numpy as np

from mambaspike import selective_scan_fast, selective_scan_ref

rng = np.random.default_rng(0)
L, D, N = 512, 8, 8
x = rng.normal(size=(L, D))
delta = np.log1p(np.exp(rng.normal(-1, 1, size=(L, D))))
A = -np.exp(rng.normal(size=(D, N)))
B, C = rng.normal(size=(L, N)), rng.normal(size=(L, N))
D_skip = rng.normal(size=D)

t0 = time.perf_counter()
ref = selective_scan_ref(x, delta, A, B, C, D_skip).data
t1 = time.perf_counter()
print(f"reference        {1e3 * (t1 - t0):8.1f} ms")
for chunk in (1, 8, 16, 64):
    t0 = time.perf_counter()
    fast = selective_scan_fast(x, delta, A, B, C, D_skip, chunk=chunk).data
    t1 = time.perf_counter()
    print(f"fast chunk={chunk:<3d}   {1e3 * (t1 - t0):8.1f} ms   max |fast - ref| {np.abs(fast - ref).max():.2e}")
