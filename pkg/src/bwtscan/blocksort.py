"""In-memory suffix ordering for one text block.

Block suffixes are full text suffixes: each one continues past the
block into the region already processed to its right. The sorter ranks
fixed-width character windows by prefix doubling; windows that come out
equal are settled with the comparison flags carried over from that
region, so no text outside the buffer is ever touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

HOLE = -1          # cell whose character lies left of the block
SAMPLE = 512       # rows per sampled count vector


@dataclass
class BlockContext:
    """One block plus the start of the region to its right.

    block: the characters being sorted, stored as int16 (the conceptual
        terminator is -1 and may only appear as the very last character
        of the rightmost block).
    after: the previously processed block (empty on the first pass).
    tie_flags: tie_flags[d-1] = 1 iff the text suffix starting d
        positions into `after` sorts after the suffix starting at
        `after`'s first position.
    """

    block: np.ndarray
    after: np.ndarray = field(default_factory=lambda: np.empty(0, np.int16))
    tie_flags: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))

    def __post_init__(self):
        if self.block.size < 1:
            raise ValueError("empty block")
        if self.after.size:
            if self.after.size < self.block.size:
                raise ValueError("context block shorter than the block")
            if self.tie_flags.size != self.after.size - 1:
                raise ValueError("tie flag count does not match context")

    @property
    def last_char(self) -> int:
        return int(self.block[-1])


@dataclass
class BlockSortResult:
    order: np.ndarray       # order[r-1] = block position (1-based) of rank r
    ranks: np.ndarray       # ranks[p-1] = rank of block position p
    cells: np.ndarray       # int16 per rank; HOLE at the head's row
    hole_row: int           # row holding the hole = rank of position 1
    below: np.ndarray       # below[c] = block characters smaller than c
    occ_starts: np.ndarray  # CSR over successor rows, per character
    occ_rows: np.ndarray
    rank_index: "RankIndex"
    last_char: int          # final character of the block

    @property
    def head_rank(self) -> int:
        return self.hole_row


class RankIndex:
    """Occurrence counts over the cell column: sampled vectors plus a
    bounded scan. The hole row never counts. Also carries the
    smaller-character count table used by the backward step."""

    def __init__(self, cells: np.ndarray, below: np.ndarray):
        self._cells = cells
        self.below = below
        self._base = None

    def _build(self):
        m = self._cells.size
        nb = m // SAMPLE
        base = np.zeros((nb + 1, 257), np.int64)
        if nb:
            shifted = self._cells[:nb * SAMPLE].astype(np.int64) + 1
            keys = np.repeat(np.arange(nb), SAMPLE) * 257 + shifted
            per = np.bincount(keys, minlength=nb * 257).reshape(nb, 257)
            base[1:] = np.cumsum(per, axis=0)
        self._base = base

    def rank(self, c: int, i: int) -> int:
        """Occurrences of character c among the first i rows."""
        if not 0 <= i <= self._cells.size:
            raise ValueError("row out of range")
        if self._base is None:
            self._build()
        k = i // SAMPLE
        head = int(self._base[k][c + 1])
        return head + int(np.count_nonzero(self._cells[k * SAMPLE:i] == c))


def rank_query(index: RankIndex, c: int, i: int) -> int:
    return index.rank(c, i)


def _window_ranks(s: np.ndarray, need: int):
    """Prefix-doubling ranks; stops at width >= need or full distinctness."""
    n2 = s.size
    r = np.unique(s, return_inverse=True)[1].astype(np.int64)
    width = 1
    while width < need and r.max() != n2 - 1:
        key2 = np.full(n2, -1, np.int64)
        key2[:n2 - width] = r[width:]
        order = np.lexsort((key2, r))
        rs = r[order]
        k2 = key2[order]
        grp = np.concatenate(
            ([0], np.cumsum((rs[1:] != rs[:-1]) | (k2[1:] != k2[:-1]))))
        nr = np.empty(n2, np.int64)
        nr[order] = grp
        r = nr
        width *= 2
    return r, width


def sort_block(ctx: BlockContext) -> BlockSortResult:
    blk = ctx.block
    m = blk.size
    first = ctx.after.size == 0
    if first:
        s = blk.astype(np.int64)
        need = m
    else:
        s = np.concatenate((blk, ctx.after)).astype(np.int64)
        need = -(-m // 2)
    r, width = _window_ranks(s, need)

    key1 = r[:m]
    if first:
        # the terminator makes every suffix distinct, no tie stage
        order0 = np.argsort(key1, kind="stable")
    else:
        idx2 = np.arange(m) + m - width
        key2 = np.where(idx2 < s.size, r[np.minimum(idx2, s.size - 1)], -1)
        order0 = np.lexsort((key2, key1)).astype(np.int64)
        k1o = key1[order0]
        k2o = key2[order0]
        same = (k1o[1:] == k1o[:-1]) & (k2o[1:] == k2o[:-1])
        if same.any():
            # recover [start, end) spans of maximal tied stretches
            padded = np.concatenate(([False], same, [False]))
            flips = np.flatnonzero(padded[1:] != padded[:-1])
            starts = flips[::2]
            ends = flips[1::2] + 1
            _k.sort_tied_groups(order0, starts.astype(np.int64),
                                ends.astype(np.int64), ctx.tie_flags)

    order = order0 + 1
    ranks = np.empty(m, np.int64)
    ranks[order0] = np.arange(1, m + 1)
    cells = np.where(order0 == 0, np.int16(HOLE),
                     blk[np.maximum(order0 - 1, 0)]).astype(np.int16)
    hole_row = int(ranks[0])

    cnt = np.bincount(blk.astype(np.int64) + 1, minlength=257)
    below = np.cumsum(cnt)[:256]

    succ_chars = blk[:-1].astype(np.int64)
    succ_rows = ranks[1:]
    csr = np.lexsort((succ_rows, succ_chars))
    occ_rows = succ_rows[csr]
    occ_starts = np.concatenate(
        ([0], np.cumsum(np.bincount(succ_chars, minlength=256))))

    return BlockSortResult(order=order, ranks=ranks, cells=cells,
                           hole_row=hole_row, below=below,
                           occ_starts=occ_starts, occ_rows=occ_rows,
                           rank_index=RankIndex(cells, below),
                           last_char=int(blk[-1]))


def block_compare_flags(result: BlockSortResult) -> np.ndarray:
    """Flags this block hands to the next pass: for each position 2..m,
    whether its suffix sorts after the block head's suffix."""
    return (result.ranks[1:] > result.hole_row).astype(np.uint8)


def compare_suffixes(ctx: BlockContext, i: int, j: int) -> int:
    """Order of the full text suffixes at block positions i and j (1-based).

    Returns -1, 0, or 1. Windows are compared character-wise; a window
    past the buffer end sorts first (it can only happen behind the
    terminator, where the order is already settled).
    """
    if i == j:
        return 0
    blk = ctx.block
    m = blk.size
    s = blk if ctx.after.size == 0 else np.concatenate((blk, ctx.after))
    s = s.astype(np.int64)

    def window(p0):
        w = s[p0:p0 + m]
        if w.size < m:
            w = np.concatenate((w, np.full(m - w.size, -2, np.int64)))
        return w

    wi = window(i - 1)
    wj = window(j - 1)
    neq = np.flatnonzero(wi != wj)
    if neq.size:
        k = neq[0]
        return -1 if wi[k] < wj[k] else 1
    d = abs(j - i)
    low_first = ctx.tie_flags[d - 1] == 1
    if low_first:
        return -1 if i < j else 1
    return 1 if i < j else -1
