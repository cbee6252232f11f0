"""Counter-based random streams.

Every Monte Carlo routine splits its draws into fixed-size chunks and draws
chunk ``k`` from ``stream(seed, k)``.  The chunk layout does not depend on the
number of worker threads, so results are bit-identical for any ``threads``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 4096


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in key]])
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(total: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(total), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn, total: int, seed: int, *key: int, chunk: int = CHUNK, threads: int = 1):
    """Apply ``fn(gen, size)`` to every chunk and return results in chunk order."""
    sizes = chunk_sizes(total, chunk)
    jobs = [(k, s) for k, s in enumerate(sizes)]

    def run(job):
        k, s = job
        return fn(stream(seed, *key, k), s)

    if threads <= 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(run, jobs))
