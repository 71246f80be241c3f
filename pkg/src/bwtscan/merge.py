"""Per-pass merge work: gap counting, comparison-flag updates, and the
sequential interleave of the block's rows into the partial results.

The walk over the processed region runs strictly backward over the raw
text; everything written comes out strictly forward. All functions here
take plain arrays or read/emit callables so the builders can wire them
to files, memory buffers, or the reserved output extent.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as _k
from .blocksort import HOLE, BlockSortResult, RankIndex


def backward_step(i: int, c: int, index: RankIndex, block_last_char: int,
                  flag_bit: int) -> int:
    """Number of new suffixes smaller than the old suffix extended by c.

    i is that count for the unextended suffix. When c equals the block's
    last character the tie against the block-final suffix is settled by
    the comparison flag of the unextended position.
    """
    if c < 0:
        # the terminator is below every block character
        return 0
    j = int(index.below[c]) + index.rank(c, i)
    if c == block_last_char and flag_bit:
        j += 1
    return j


class GapScan:
    """Backward walk over the old region.

    Accumulates the gap array and the running new-suffix count while
    emitting the refreshed comparison flag of every visited position.
    Feed the old text last-character-first, in chunks, with the matching
    incoming flags; then call finish() once for the old region's head.
    """

    def __init__(self, result: BlockSortResult):
        self._res = result
        self.gap = np.zeros(result.order.size + 1, np.int64)
        self.count = 0
        self._below = result.below.astype(np.int64)
        self.head_flag = None

    def feed(self, text_rev: np.ndarray, flags_in: np.ndarray) -> np.ndarray:
        if text_rev.size != flags_in.size:
            raise ValueError("text chunk and flag chunk differ in length")
        out = np.empty(text_rev.size, np.uint8)
        r = self._res
        self.count = _k.region_scan(
            text_rev, flags_in, self.count, self._below, r.occ_starts,
            r.occ_rows, r.hole_row, r.last_char, self.gap, out)
        return out

    def finish(self) -> int:
        """Flag bit for the old region's head position."""
        r = self._res
        bit = 1 if self.count >= r.hole_row else 0
        self.gap[self.count] += 1
        # step across the block's last character; its tie flag is zero
        # because that compares the old head suffix with itself
        c = r.last_char
        lo, hi = r.occ_starts[c], r.occ_starts[c + 1]
        j = int(self._below[c]) + int(
            np.searchsorted(r.occ_rows[lo:hi], self.count, side="right"))
        if j != int(r.ranks[-1]) - 1:
            raise AssertionError("backward walk did not land on the "
                                 "block-final suffix")
        self.head_flag = bit
        return bit


def block_flags_descending(result: BlockSortResult) -> np.ndarray:
    """Block positions m..2: whether each sorts after the block head."""
    return (result.ranks[1:] > result.hole_row).astype(np.uint8)[::-1]


class MergePlan:
    """Row placement for one merge.

    olds_before[r-1] tells how many old rows precede the new rank r;
    new_rows holds each rank's 1-based merged row. Monotone by
    construction, which keeps every merge a single forward sweep.
    """

    def __init__(self, gap: np.ndarray, result: BlockSortResult):
        m = result.order.size
        if int(gap.size) != m + 1:
            raise ValueError("gap array size mismatch")
        self.result = result
        self.olds_before = np.cumsum(gap[:m])
        self.new_rows = np.arange(1, m + 1, dtype=np.int64) + self.olds_before
        self.hole_row = int(self.new_rows[result.hole_row - 1])
        self.old_total = int(gap.sum())
        self.total = self.old_total + m

    def news_before(self, v):
        """New rows preceding the old rank(s) v in the merged order."""
        return np.searchsorted(self.olds_before, v, side="left")


def merge_cell_stream(plan: MergePlan, old_read, emit, old_hole=None,
                      chunk=1 << 20) -> None:
    """Interleave stored cell bytes: old stream in, merged stream out.

    old_read(k) must yield the next k stored old bytes (the old hole is
    not stored; its character is the block's last character and gets
    patched in here). The merged stream likewise omits the fresh hole.
    """
    res = plan.result
    new_rows0 = plan.new_rows - 1
    a = 0
    j = 0
    old_v = 1
    patch = res.last_char
    while a < plan.total:
        b = min(a + chunk, plan.total)
        j1 = int(np.searchsorted(new_rows0, b, side="left"))
        rel_new = new_rows0[j:j1] - a
        count = b - a
        nold = count - rel_new.size
        has_hole = old_hole is not None and old_v <= old_hole < old_v + nold
        stored = old_read(nold - (1 if has_hole else 0))
        if stored.size != nold - (1 if has_hole else 0):
            raise ValueError("old cell stream ended early")
        conc = np.empty(nold, np.int16)
        if has_hole:
            rh = old_hole - old_v
            conc[:rh] = stored[:rh]
            conc[rh] = patch
            conc[rh + 1:] = stored[rh:]
        else:
            conc[:] = stored
        out = np.empty(count, np.int16)
        mask = np.ones(count, bool)
        if rel_new.size:
            out[rel_new] = res.cells[j:j1]
            mask[rel_new] = False
        out[mask] = conc
        hr = plan.hole_row - 1
        if a <= hr < b:
            out = np.delete(out, hr - a)
        if out.size and out.min() < 0:
            raise AssertionError("hole byte leaked into the stored stream")
        emit(out.astype(np.uint8))
        a = b
        j = j1
        old_v += nold


def merge_partial(old_cells: np.ndarray, old_hole, gap: np.ndarray,
                  result: BlockSortResult):
    """In-memory reference merge over cell arrays carrying their holes.

    old_cells is int16 with HOLE at 1-based position old_hole (pass None
    with an empty array on the first pass). Returns (merged, hole_row)
    in the same representation.
    """
    plan = MergePlan(gap, result)
    if old_cells.size != plan.old_total:
        raise ValueError("old length does not match the gap mass")
    if old_hole is None:
        stored = old_cells.astype(np.uint8)
    else:
        stored = np.delete(old_cells, old_hole - 1).astype(np.uint8)
    cursor = [0]

    def old_read(k):
        out = stored[cursor[0]:cursor[0] + k]
        cursor[0] += k
        return out

    parts = []
    merge_cell_stream(plan, old_read, parts.append, old_hole=old_hole)
    flat = (np.concatenate(parts) if parts else
            np.empty(0, np.uint8)).astype(np.int16)
    merged = np.insert(flat, plan.hole_row - 1, np.int16(HOLE))
    return merged, plan.hole_row


def merge_rows_stream(plan: MergePlan, new_values: np.ndarray, old_read,
                      emit, transform=None, chunk=1 << 17) -> None:
    """Interleave fixed-width per-row values (no holes involved).

    new_values[r-1] is the value of new rank r; old_read(k) yields the
    next k old values; transform(vals, first_old_row) may rewrite an old
    batch before placement. Used for the successor and position tables.
    """
    new_rows0 = plan.new_rows - 1
    a = 0
    j = 0
    old_v = 1
    while a < plan.total:
        b = min(a + chunk, plan.total)
        j1 = int(np.searchsorted(new_rows0, b, side="left"))
        rel_new = new_rows0[j:j1] - a
        count = b - a
        nold = count - rel_new.size
        olds = old_read(nold)
        if olds.size != nold:
            raise ValueError("old row stream ended early")
        if transform is not None and nold:
            olds = transform(olds, old_v)
        out = np.empty(count, new_values.dtype)
        mask = np.ones(count, bool)
        if rel_new.size:
            out[rel_new] = new_values[j:j1]
            mask[rel_new] = False
        out[mask] = olds
        emit(out)
        a = b
        j = j1
        old_v += nold


def merge_pair_stream(plan: MergePlan, new_pairs: np.ndarray, old_read,
                      emit, chunk=1 << 16) -> None:
    """Merge sparse (merged_row, payload) pairs sorted by row.

    new_pairs is already placed (rows are merged rows); old pairs come
    in old coordinates and get shifted by the news that landed before
    them. Emits (rows, payloads) batches in merged order.
    """
    ni = 0
    while True:
        olds = old_read(chunk)
        if olds.shape[0] == 0:
            if ni < new_pairs.shape[0]:
                emit(new_pairs[ni:])
            break
        rows = olds[:, 0] + plan.news_before(olds[:, 0])
        shifted = np.stack((rows, olds[:, 1]), axis=1)
        hi = shifted[-1, 0]
        take = int(np.searchsorted(new_pairs[ni:, 0], hi, side="left")) + ni
        if take > ni:
            both = np.concatenate((new_pairs[ni:take], shifted))
            both = both[np.argsort(both[:, 0], kind="stable")]
            emit(both)
            ni = take
        else:
            emit(shifted)
