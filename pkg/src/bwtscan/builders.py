"""Sequential-scan index construction.

The text is split into blocks that are consumed right to left, one pass
per block.  A pass sorts the suffixes that start inside its block, walks
the already-processed region backward once to count how many processed
suffixes fall between consecutive new ones, and then interleaves the
partial product accordingly.  Working storage is a flag bit per text
position plus the partial product itself; everything is streamed, so
memory use is governed by the block size, not the text size.

Four products share the driver: the transform column, suffix positions,
successor ranks, and the sampled position table.  The transform can
additionally be built in place, growing leftward inside the reserved
output file.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import formats
from .blocksort import BlockContext, sort_block, block_compare_flags
from .merge import (GapScan, MergePlan, block_flags_descending,
                    merge_cell_stream, merge_pair_stream, merge_rows_stream)
from .streams import (BitChunkReader, BitChunkWriter, BytesInput, CODECS,
                      DiskWorkspace, FileInput, IDENTITY, MemoryWorkspace,
                      OutputFile, PAGE_SIZE, SpaceLedger, StreamError,
                      StreamWriter)

EXTERNAL = "external"
INTERNAL = "internal"
TWO_FILE = "two-file"
IN_PLACE = "in-place"

HEADER = formats.BWT_HEADER_SIZE


class UsageError(ValueError):
    """Invalid configuration or argument combination."""


@dataclass
class BuildConfig:
    block_size: Optional[int] = None    # None: derived from memory_budget
    codec: str = IDENTITY
    mode: str = EXTERNAL
    layout: str = TWO_FILE
    memory_budget: int = 256 << 20
    page_size: int = PAGE_SIZE
    workdir: Optional[str] = None

    def validated(self) -> "BuildConfig":
        if self.codec not in CODECS:
            raise UsageError("unknown codec %r" % (self.codec,))
        if self.mode not in (EXTERNAL, INTERNAL):
            raise UsageError("unknown mode %r" % (self.mode,))
        if self.layout not in (TWO_FILE, IN_PLACE):
            raise UsageError("unknown layout %r" % (self.layout,))
        if self.block_size is not None and self.block_size < 1:
            raise UsageError("block size must be at least 1")
        if self.memory_budget < 1:
            raise UsageError("memory budget must be positive")
        if self.page_size < 1:
            raise UsageError("page size must be positive")
        return self


def _pick_block_size(cfg: BuildConfig, n: int) -> int:
    size = n + 1
    if cfg.block_size is not None:
        return min(cfg.block_size, size)
    # keep the per-entry bookkeeping of one block inside the budget
    bits = max(1, math.ceil(math.log2(size + 1)))
    return max(1, min(size, cfg.memory_budget // bits))


def _open_source(source, cfg: BuildConfig, ledger: SpaceLedger):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return BytesInput(bytes(source), ledger)
    if cfg.mode == INTERNAL:
        length = os.path.getsize(source)
        if length > cfg.memory_budget:
            raise UsageError("input exceeds the internal-mode buffer budget")
        with open(source, "rb") as fh:
            return BytesInput(fh.read(), ledger)
    return FileInput(source, ledger)


def _make_workspace(cfg: BuildConfig, ledger: SpaceLedger):
    if cfg.mode == INTERNAL:
        return MemoryWorkspace(ledger)
    root = tempfile.mkdtemp(prefix="bwtscan-", dir=cfg.workdir)
    return DiskWorkspace(root, ledger)


def _exact_read(reader, nbytes: int) -> np.ndarray:
    """Pull exactly nbytes from a RangeReader or fail."""
    first = reader.read(nbytes)
    if first.size == nbytes:
        return first
    parts = [first]
    got = first.size
    while got < nbytes:
        arr = reader.read(nbytes - got)
        if arr.size == 0:
            raise StreamError("partial product ended early")
        parts.append(arr)
        got += arr.size
    return np.concatenate(parts)


class _Pass:
    """What one pass hands to the product-specific merge callback."""

    __slots__ = ("index", "start", "result", "plan", "is_first", "is_final")

    def __init__(self, index, start, result, plan, is_first, is_final):
        self.index = index
        self.start = start
        self.result = result
        self.plan = plan
        self.is_first = is_first
        self.is_final = is_final


def _drive(inp, n: int, m: int, ws, ledger: SpaceLedger, on_pass) -> None:
    """Run every pass right to left, keeping the comparison-flag stream
    alive between passes, and hand each block's placement plan to the
    product callback."""
    size = n + 1
    npasses = (size + m - 1) // m
    prev_block = np.empty(0, np.int16)
    prev_tie = np.empty(0, np.uint8)
    flags_prefix = None
    flags_bits = 0
    for p in range(npasses):
        end = size - p * m
        start = max(1, end - m + 1)
        if p == 0:
            # the rightmost block carries the conceptual terminator
            tail = inp.read_slice(start - 1, n - (start - 1)).astype(np.int16)
            blk = np.concatenate([tail, np.array([-1], np.int16)])
        else:
            blk = inp.read_slice(start - 1, end - start + 1).astype(np.int16)
        result = sort_block(BlockContext(blk, prev_block, prev_tie))
        is_final = p == npasses - 1
        writer = None
        prefix = None
        if not is_final:
            prefix = ws.unique("flags")
            writer = BitChunkWriter(ws, prefix)
        if p == 0:
            gap = np.zeros(blk.size + 1, np.int64)
            if writer is not None:
                writer.append(block_flags_descending(result))
        else:
            reader = BitChunkReader(ws, flags_prefix, flags_bits, consume=True)
            scan = GapScan(result)
            for chunk in inp.backward_chunks(end, n):
                out_bits = scan.feed(chunk, reader.next_bits(chunk.size))
                if writer is not None:
                    writer.append(out_bits)
            head_bit = scan.finish()
            if writer is not None:
                writer.append(np.array([head_bit], np.uint8))
                writer.append(block_flags_descending(result))
            gap = scan.gap
        if writer is not None:
            flags_prefix = prefix
            flags_bits = writer.finish()
        on_pass(_Pass(p, start, result, MergePlan(gap, result),
                      p == 0, is_final))
        ledger.count_pass()
        prev_block = blk
        prev_tie = block_compare_flags(result)


def _run_build(source, out_path: str, cfg: BuildConfig, make_callback) -> dict:
    ledger = SpaceLedger()
    inp = _open_source(source, cfg, ledger)
    ws = _make_workspace(cfg, ledger)
    out = OutputFile(out_path, ledger)
    try:
        n = inp.n
        m = _pick_block_size(cfg, n)
        on_pass = make_callback(n, ws, out, ledger)
        _drive(inp, n, m, ws, ledger, on_pass)
    finally:
        out.close()
        inp.close()
        ws.cleanup()
        if isinstance(ws, DiskWorkspace):
            ws.destroy()
    return ledger.stats()


# ---------------------------------------------------------------------------
# transform column

def _bwt_two_file(cfg, n, ws, out):
    state = {"old": None, "hole": None}

    def on_pass(ps: _Pass):
        rdr = (ws.reader(state["old"], codec=cfg.codec, consume=True)
               if state["old"] else None)

        def old_read(k):
            if k == 0:
                return np.empty(0, np.uint8)
            return _exact_read(rdr, k)

        if ps.is_final:
            out.append(np.frombuffer(
                formats.bwt_header_bytes(n, ps.plan.hole_row - 1, cfg.codec),
                np.uint8))
            name = None
            writer = StreamWriter(out.append, codec=cfg.codec)
        else:
            name = ws.unique("part")
            writer = ws.writer(name, codec=cfg.codec)
        merge_cell_stream(ps.plan, old_read, writer.write,
                          old_hole=state["hole"])
        writer.close()
        if rdr is not None:
            rdr.close()
        state["old"] = name
        state["hole"] = ps.plan.hole_row

    return on_pass


def _bwt_in_place(cfg, n, ws, out):
    # reserve the full container up front; the partial column lives
    # right-aligned inside it and each merge slides it leftward
    out.truncate(HEADER + n)
    state = {"done": 0, "hole": None}

    def on_pass(ps: _Pass):
        stored_old = max(0, state["done"] - 1)
        cur = {"r": HEADER + n - stored_old,
               "w": HEADER + n - (ps.plan.total - 1)}

        def old_read(k):
            if k == 0:
                return np.empty(0, np.uint8)
            arr = out.pread(cur["r"], k)
            cur["r"] += k
            return arr

        def emit(arr):
            out.pwrite(cur["w"], arr)
            cur["w"] += arr.size

        if ps.is_final:
            out.pwrite(0, np.frombuffer(
                formats.bwt_header_bytes(n, ps.plan.hole_row - 1, cfg.codec),
                np.uint8))
        merge_cell_stream(ps.plan, old_read, emit, old_hole=state["hole"])
        state["done"] += ps.result.order.size
        state["hole"] = ps.plan.hole_row

    return on_pass


def build_bwt(source, out_path: str, cfg: BuildConfig = None) -> dict:
    """Build the transform container for source; returns the run stats."""
    cfg = (cfg or BuildConfig()).validated()
    if cfg.layout == IN_PLACE and cfg.codec != IDENTITY:
        raise UsageError("in-place layout requires the identity codec")

    def make(n, ws, out, ledger):
        if cfg.layout == IN_PLACE:
            return _bwt_in_place(cfg, n, ws, out)
        return _bwt_two_file(cfg, n, ws, out)

    return _run_build(source, out_path, cfg, make)


# ---------------------------------------------------------------------------
# suffix positions

def _require_plain(cfg: BuildConfig) -> None:
    if cfg.layout == IN_PLACE:
        raise UsageError("in-place layout applies to the transform only")
    if cfg.codec != IDENTITY:
        raise UsageError("run-length coding applies to the transform only")


def _u64_reader(rdr, width: int):
    """Exact fixed-width little-endian row reader over a RangeReader."""

    def old_read(k):
        if k == 0 or rdr is None:
            return np.empty(0, np.int64)
        raw = _exact_read(rdr, width * k)
        return np.frombuffer(raw.tobytes(), "<u8").astype(np.int64)

    return old_read


def _u64_bytes(vals: np.ndarray) -> np.ndarray:
    return np.frombuffer(vals.astype("<u8").tobytes(), np.uint8)


def build_sa(source, out_path: str, cfg: BuildConfig = None) -> dict:
    """Build the suffix position table (text positions in rank order)."""
    cfg = (cfg or BuildConfig()).validated()
    _require_plain(cfg)

    def make(n, ws, out, ledger):
        state = {"old": None}

        def on_pass(ps: _Pass):
            rdr = ws.reader(state["old"], consume=True) if state["old"] else None
            if ps.is_final:
                formats.write_sa_magic(out)
                name = None

                def emit(vals):
                    out.append(formats.sa_rows_bytes(vals))
            else:
                name = ws.unique("rows")

                def emit(vals):
                    ws.append(name, _u64_bytes(vals))

            # global 1-based start position of each newly ranked suffix
            new_vals = (ps.start + ps.result.order - 1).astype(np.int64)
            merge_rows_stream(ps.plan, new_vals, _u64_reader(rdr, 8), emit)
            if rdr is not None:
                rdr.close()
            state["old"] = name

        return on_pass

    return _run_build(source, out_path, cfg, make)


# ---------------------------------------------------------------------------
# successor ranks

def build_psi(source, out_path: str, cfg: BuildConfig = None) -> dict:
    """Build the successor-rank table: for each rank, the rank holding the
    next text position, with row 1 wrapping to the region head."""
    cfg = (cfg or BuildConfig()).validated()
    _require_plain(cfg)

    def make(n, ws, out, ledger):
        state = {"old": None, "hole": None}

        def on_pass(ps: _Pass):
            plan = ps.plan
            res = ps.result
            rdr = ws.reader(state["old"], consume=True) if state["old"] else None

            mprime = res.order.size
            succ = np.empty(mprime, np.int64)
            if mprime > 1:
                succ[res.ranks[:-1] - 1] = plan.new_rows[res.ranks[1:] - 1]
            if ps.is_first:
                # the block tail wraps around to the head of this region
                succ[res.ranks[-1] - 1] = plan.hole_row
            else:
                old_hole = state["hole"]
                succ[res.ranks[-1] - 1] = old_hole + int(
                    plan.news_before(np.array([old_hole], np.int64))[0])

            def transform(vals, first_row):
                shifted = vals + plan.news_before(vals)
                if first_row == 1:
                    # row 1 holds the terminator suffix; its successor is
                    # the region head, which this pass just relocated
                    shifted[0] = plan.hole_row
                return shifted

            if ps.is_final:
                delta = formats.PsiDeltaWriter(out)

                def emit(vals):
                    delta.feed(vals)
            else:
                name = ws.unique("rows")

                def emit(vals):
                    ws.append(name, _u64_bytes(vals))

            merge_rows_stream(plan, succ, _u64_reader(rdr, 8), emit,
                              transform=None if ps.is_first else transform)
            if ps.is_final:
                delta.close()
                name = None
            if rdr is not None:
                rdr.close()
            state["old"] = name
            state["hole"] = plan.hole_row

        return on_pass

    return _run_build(source, out_path, cfg, make)


# ---------------------------------------------------------------------------
# sampled positions

def build_posd(source, out_path: str, d: int, cfg: BuildConfig = None) -> dict:
    """Build the sampled position table: (rank, position) for every text
    position that is a multiple of d, terminator position included."""
    if d < 1:
        raise UsageError("sample step must be at least 1")
    cfg = (cfg or BuildConfig()).validated()
    _require_plain(cfg)

    def make(n, ws, out, ledger):
        state = {"old": None}

        def on_pass(ps: _Pass):
            plan = ps.plan
            res = ps.result
            rdr = ws.reader(state["old"], consume=True) if state["old"] else None

            def old_read(k):
                if rdr is None or k == 0:
                    return np.empty((0, 2), np.int64)
                raw = rdr.read(16 * k)
                while raw.size % 16:
                    more = rdr.read(16 - raw.size % 16)
                    if more.size == 0:
                        raise StreamError("pair stream ends mid-record")
                    raw = np.concatenate([raw, more])
                if raw.size == 0:
                    return np.empty((0, 2), np.int64)
                return np.frombuffer(raw.tobytes(), "<u8").astype(
                    np.int64).reshape(-1, 2)

            mprime = res.order.size
            pos = np.arange(ps.start, ps.start + mprime, dtype=np.int64)
            sel = np.flatnonzero(pos % d == 0)
            rows = plan.new_rows[res.ranks[sel] - 1]
            new_pairs = np.stack([rows, pos[sel]], axis=1)
            new_pairs = new_pairs[np.argsort(new_pairs[:, 0], kind="stable")]

            if ps.is_final:
                out.append(formats.posd_header_bytes(d))
                name = None

                def emit(pairs):
                    out.append(formats.posd_pairs_bytes(pairs))
            else:
                name = ws.unique("pairs")
                ws.write_file(name, np.empty(0, np.uint8))

                def emit(pairs):
                    ws.append(name, np.frombuffer(
                        pairs.astype("<u8").tobytes(), np.uint8))

            merge_pair_stream(plan, new_pairs, old_read, emit)
            if rdr is not None:
                rdr.close()
            state["old"] = name

        return on_pass

    return _run_build(source, out_path, cfg, make)
