"""Brute-force reference implementations.

Everything here favours obviousness over speed.  These routines ship with
the library (rather than living in the test tree) so the ``verify`` CLI
subcommand can check production output on real files, under a size guard.

Conventions match the rest of the package: the text gets one conceptual
terminator appended, smaller than every byte value (coded as -1 in int
arrays), ranks and positions are 1-based in memory, and file encodings
are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GUARD = 1 << 20

_TINY = 64


class OracleError(ValueError):
    """Raised when an input exceeds the brute-force size guard."""


def _with_sentinel(text) -> np.ndarray:
    t = np.frombuffer(bytes(text), dtype=np.uint8).astype(np.int16)
    return np.concatenate([t, np.array([-1], dtype=np.int16)])


def _order_tiny(t: np.ndarray) -> np.ndarray:
    # true comparison sort over materialized suffix tuples
    n = t.size
    suf = sorted(range(n), key=lambda i: tuple(t[i:]))
    return np.asarray(suf, dtype=np.int64) + 1


def _order_doubling(t: np.ndarray) -> np.ndarray:
    n = t.size
    rank = np.unique(t, return_inverse=True)[1].astype(np.int64)
    width = 1
    while width < n:
        idx = np.arange(n, dtype=np.int64) + width
        second = np.where(idx < n, rank[np.minimum(idx, n - 1)], -1)
        perm = np.lexsort((second, rank))
        key_prev = np.stack([rank[perm], second[perm]])
        new = np.zeros(n, dtype=np.int64)
        diff = (key_prev[:, 1:] != key_prev[:, :-1]).any(axis=0)
        new[perm[1:]] = np.cumsum(diff)
        rank = new
        if rank.max() == n - 1:
            break
        width *= 2
    out = np.zeros(n, dtype=np.int64)
    out[rank] = np.arange(n, dtype=np.int64)
    return out + 1


def suffix_order(t: np.ndarray) -> np.ndarray:
    """1-based start positions of the suffixes of ``t``, lexicographic order."""
    if t.size <= _TINY:
        return _order_tiny(t)
    return _order_doubling(t)


@dataclass
class OracleResult:
    """All index structures for one text, computed the slow way.

    sa          1-based text position per rank, length N
    rank_of_pos inverse of sa, indexed 1..N (slot 0 unused)
    cells       transform column as int16, -1 at the terminator cell
    primary_row 1-based row holding that terminator cell
    psi         1-based successor rank per rank, length N
    """

    n: int
    sa: np.ndarray
    rank_of_pos: np.ndarray
    cells: np.ndarray
    primary_row: int
    psi: np.ndarray

    def payload_bytes(self) -> np.ndarray:
        kept = np.delete(self.cells, self.primary_row - 1)
        return kept.astype(np.uint8)

    @property
    def primary_index0(self) -> int:
        return self.primary_row - 1

    def sa_file_values(self) -> np.ndarray:
        return (self.sa - 1).astype(np.uint64)

    def psi_file_values(self) -> np.ndarray:
        return (self.psi - 1).astype(np.int64)

    def pos_pairs(self, d: int) -> np.ndarray:
        """0-based (rank, position) pairs for sampled positions, rank order."""
        if d < 1:
            raise ValueError("sample step must be positive")
        size = self.n + 1
        pos = np.arange(d, size + 1, d, dtype=np.int64)
        pairs = np.stack([self.rank_of_pos[pos] - 1, pos - 1], axis=1)
        return pairs[np.argsort(pairs[:, 0], kind="stable")]


def oracle_all(text) -> OracleResult:
    t = _with_sentinel(text)
    size = t.size
    if size > GUARD:
        raise OracleError("input too large for the brute-force reference")
    sa = suffix_order(t)
    rank_of_pos = np.zeros(size + 1, dtype=np.int64)
    rank_of_pos[sa] = np.arange(1, size + 1, dtype=np.int64)
    prev = np.where(sa == 1, size, sa - 1)
    cells = t[prev - 1]
    primary_row = int(np.flatnonzero(cells == -1)[0]) + 1
    succ = np.where(sa == size, 1, sa + 1)
    psi = rank_of_pos[succ]
    return OracleResult(
        n=size - 1,
        sa=sa,
        rank_of_pos=rank_of_pos,
        cells=cells,
        primary_row=primary_row,
        psi=psi.astype(np.int64),
    )


def oracle_gap(old: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Old-suffix counts around each new suffix, by full enumeration.

    ``old`` is the already-processed tail as an int array (terminator
    included once the first pass is done); ``block`` is the chunk whose
    suffixes are new.  Entry j of the result counts old suffixes falling
    strictly between new suffixes j and j+1 of the merged order, with the
    two ends open.
    """
    old = np.asarray(old, dtype=np.int16)
    block = np.asarray(block, dtype=np.int16)
    if old.size + block.size > GUARD:
        raise OracleError("combined input too large for the gap reference")
    if block.size == 0:
        raise ValueError("block must be non-empty")
    full = np.concatenate([block, old])
    order = suffix_order(full)
    m = block.size
    gap = np.zeros(m + 1, dtype=np.int64)
    slot = 0
    for start in order:
        if start <= m:
            slot += 1
        else:
            gap[slot] += 1
    return gap
