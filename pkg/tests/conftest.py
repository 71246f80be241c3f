"""Shared fixtures and small data generators for the test suite."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bwtscan.blocksort import BlockContext, block_compare_flags, sort_block

settings.register_profile(
    "suite", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

ALPHABETS = {
    1: b"a",
    2: b"ab",
    4: b"acgt",
    26: bytes(range(97, 123)),
    255: bytes(range(1, 256)),
}


def random_text(rng, n, sigma):
    """n bytes drawn uniformly from the first sigma letters of ALPHABETS."""
    pool = np.frombuffer(ALPHABETS[sigma], np.uint8)
    return pool[rng.integers(0, pool.size, n)].tobytes()


def periodic_text(rng, r, k, sigma=4):
    """A string w^k whose smallest period is exactly r."""
    pool = np.frombuffer(ALPHABETS[sigma], np.uint8)
    while True:
        w = pool[rng.integers(0, pool.size, r)].tobytes()
        if smallest_period(w) == r:
            return w * k


def smallest_period(s):
    n = len(s)
    for r in range(1, n + 1):
        if n % r == 0 and s == s[:r] * (n // r):
            return r
    return n


def fibonacci_word(n):
    a, b = b"a", b"ab"
    while len(b) < n:
        a, b = b, b + a
    return b[:n]


def run_count(s):
    if not s:
        return 0
    a = np.frombuffer(s, np.uint8)
    return int(1 + np.count_nonzero(a[1:] != a[:-1]))


def with_sentinel(text):
    t = np.frombuffer(bytes(text), np.uint8).astype(np.int16)
    return np.concatenate([t, np.array([-1], np.int16)])


def drive_passes(text, m):
    """Replay the builders' block schedule: yields (start, ctx, result)
    per pass, rightmost block first, carrying the tie flags along."""
    t = with_sentinel(text)
    size = t.size
    prev = np.empty(0, np.int16)
    tie = np.empty(0, np.uint8)
    p = 0
    while p * m < size:
        end = size - p * m
        start = max(1, end - m + 1)
        blk = t[start - 1:end].copy()
        ctx = BlockContext(blk, prev, tie)
        res = sort_block(ctx)
        yield start, ctx, res
        prev = blk
        tie = block_compare_flags(res)
        p += 1


def suffix_exceeds(t, k, region):
    """Brute-force: does the suffix of t starting at 1-based k sort after
    the standalone string region (sentinel char -1 sorts below all)."""
    return list(t[k - 1:]) > list(region)


@pytest.fixture
def rng():
    return np.random.default_rng(0xB3D5)
