"""Recover the original text from a transform file.

Two routes are provided. naive_unbwt loads everything and walks the
predecessor map one character at a time; simple, random-access, used as
the reference. scan_unbwt reconstructs the text with sequential sweeps:
it keeps a budgeted set of cursor pieces, each owning one contiguous
stretch of the output, and per round every piece either grabs its next
character (a shared left-to-right sweep serves all of them) or, when
that character is already owned, queues up behind its left neighbour.
Queued pieces form chains that are ranked and spliced in one go, so the
piece count shrinks geometrically once the text is covered.

On-disk state between rounds:

- a code table, u16 per row: byte value + 1, with 0 at the primary row
- a mark bitmap, one bit per row, set once the row's character is owned
- piece records, fixed 40 bytes: claim row (the row a left neighbour
  queues at), next row wanted, a per-round scratch slot, payload offset
  and length, flag bits, pending byte
- a payload store holding each piece's recovered bytes in text order,
  u32 length prefix per stored record

Pieces merge by chain: members are laid out left-to-right, the chain's
rightmost member lends its claim row to the merged piece, the leftmost
lends its continuation. A torn chain, a cursor pointing nowhere, or a
final length mismatch all mean the input was not a real transform
image; those surface as InvertError.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np

from . import _kernels as _k
from .extsort import external_sort
from .formats import BWT_HEADER_SIZE, FormatError, parse_bwt_header, \
    read_bwt_file
from .listrank import ListRankError, list_rank
from .streams import DiskWorkspace, OutputFile, RangeReader, SpaceLedger, \
    _FdHandle

REC_SIZE = 40
WIDE_SIZE = 56

_FIELDS = [("anchor", "<u8"), ("link", "<u8"), ("order", "<u8"),
           ("off", "<u8"), ("len", "<u4"), ("flag", "u1"), ("fetch", "u1"),
           ("pad", "<u2")]
REC_DT = np.dtype(_FIELDS)
WIDE_DT = np.dtype(_FIELDS + [("cid", "<u8"), ("d", "<u8")])

FETCHED = 1
QUEUED = 2
HAS_TERM = 4

ROW_CHUNK = 1 << 19          # rows per sweep chunk; keep a multiple of 8
REC_CHUNK = 1 << 15
OUT_CHUNK = 1 << 20


class InvertError(RuntimeError):
    """The transform file cannot be inverted (corrupt or truncated)."""


def piece_budget(total_rows: int) -> int:
    """Cursor count for a table of total_rows rows: rows / log2(rows)."""
    if total_rows <= 1:
        return 1
    return max(1, int(total_rows / math.log2(total_rows)))


def _records(raw: np.ndarray, dt) -> np.ndarray:
    return np.frombuffer(raw.tobytes(), dt)


def _raw(arr: np.ndarray) -> np.ndarray:
    return np.frombuffer(arr.tobytes(), np.uint8)


class _Inversion:
    def __init__(self, ws, ledger, mem_budget):
        self.ws = ws
        self.ledger = ledger
        self.mem_budget = int(mem_budget)
        self.rounds = 0
        self.right_off = -1      # recovered bytes right of the terminator
        self.round_records = []
        self.round_marks = []
        self._fd = -1
        self._rdr = None

    def close(self):
        if self._rdr is not None:
            # the reader owns the fd once it exists; closing is idempotent
            self._rdr.close()
            self._rdr = None
            self._fd = -1
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    # -- setup ------------------------------------------------------------

    def load(self, bwt_path):
        """One pass: decode the payload into the code table, seed state."""
        self._fd = os.open(bwt_path, os.O_RDONLY)
        size = os.fstat(self._fd).st_size
        if size < BWT_HEADER_SIZE:
            raise FormatError("file too short for a transform header")
        handle = _FdHandle(self._fd)
        head = handle.pread(0, BWT_HEADER_SIZE)
        self.ledger.count_read(head.size)
        n, primary0, codec = parse_bwt_header(head.tobytes())
        if primary0 > n:
            raise FormatError("primary index %d out of range" % primary0)
        if codec == "identity" and size - BWT_HEADER_SIZE != n:
            raise FormatError("payload length does not match the header")
        self.n = n
        self.total = n + 1
        self.primary_row = primary0 + 1
        self.k = piece_budget(self.total)

        rdr = RangeReader(handle, BWT_HEADER_SIZE, size, codec,
                          ledger=self.ledger)
        self._rdr = rdr
        ws = self.ws
        self.codes = ws.unique("unb.codes")
        hist = np.zeros(257, np.int64)
        first = np.empty(self.k, np.uint16)
        got = 0
        for chunk in self._code_chunks(rdr, n, primary0):
            ws.append(self.codes, _raw(chunk.astype("<u2")))
            hist += np.bincount(chunk, minlength=257)
            if got < self.k:
                take = min(self.k - got, chunk.size)
                first[got:got + take] = chunk[:take]
                got += take
        self.below = np.concatenate(([0], np.cumsum(hist)[:-1]))

        # claim the first k rows as the starting pieces: each owns the
        # single character its row hands over
        k = self.k
        order = np.argsort(first, kind="stable")
        sc = first[order].astype(np.int64)
        starts = np.searchsorted(sc, sc, side="left")
        occ = np.empty(k, np.int64)
        occ[order] = np.arange(k) - starts + 1
        links = self.below[first.astype(np.int64)] + occ

        self.pay = ws.unique("unb.pay")
        buf = np.zeros(5 * k, np.uint8)
        buf[0::5] = 1
        buf[4::5] = ((first.astype(np.int64) - 1) & 0xFF).astype(np.uint8)
        ws.append(self.pay, buf)
        self.pay_size = 5 * k

        self.rec = ws.unique("unb.rec")
        nr = np.zeros(k, REC_DT)
        nr["anchor"] = np.arange(1, k + 1, dtype=np.uint64)
        nr["link"] = links.astype(np.uint64)
        nr["off"] = np.arange(k, dtype=np.uint64) * 5 + 4
        nr["len"] = 1
        nr["flag"] = np.where(first == 0, HAS_TERM, 0).astype(np.uint8)
        ws.append(self.rec, _raw(nr))

        self.marks = ws.unique("unb.marks")
        nbytes = (self.total + 7) // 8
        mb = np.zeros(nbytes, np.uint8)
        mb[:k // 8] = 0xFF
        if k % 8:
            mb[k // 8] = (0xFF << (8 - k % 8)) & 0xFF
        ws.append(self.marks, mb)

        if self.primary_row <= k:
            self.right_off = 0
        self.records = k
        self.unmarked = self.total - k
        self.ledger.count_pass()

    def _code_chunks(self, rdr, n, primary0):
        done = 0
        placed = False
        while done < n:
            arr = rdr.read(OUT_CHUNK)
            if arr.size == 0:
                raise FormatError("payload ends before n bytes")
            wide = arr.astype(np.uint16) + 1
            if not placed and primary0 < done + arr.size:
                cut = primary0 - done
                out = np.empty(arr.size + 1, np.uint16)
                out[:cut] = wide[:cut]
                out[cut] = 0
                out[cut + 1:] = wide[cut:]
                placed = True
                yield out
            else:
                yield wide
            done += arr.size
        if not placed:
            yield np.zeros(1, np.uint16)
        if rdr.read(1).size != 0:
            raise FormatError("payload longer than the header says")

    # -- chunk access -----------------------------------------------------

    def _code_rows(self, row0, rows):
        raw = self.ws.read_range(self.codes, 2 * (row0 - 1), 2 * rows)
        return np.frombuffer(raw.tobytes(), "<u2")

    def _mark_rows(self, row0, rows):
        nb = (rows + 7) // 8
        raw = self.ws.read_range(self.marks, (row0 - 1) // 8, nb)
        return np.unpackbits(raw)[:rows]

    # -- one round --------------------------------------------------------

    def run(self):
        if self.total > 1:
            bound = 2 * math.ceil(math.log2(self.total)) + 4
        else:
            bound = 4
        while self.records > 1 or self.unmarked > 0:
            self.ledger.count_round()
            self.ledger.count_pass()
            self.rounds += 1
            if self.rounds > bound:
                raise InvertError("round budget exceeded; the transform "
                                  "file looks corrupt")
            self._round()
            self.round_records.append(self.records)
            self.round_marks.append(self.total - self.unmarked)

    def _round(self):
        ws = self.ws
        byl = ws.unique("unb.byl")
        external_sort(ws, self.rec, byl, record_size=REC_SIZE, key_offset=8,
                      key_width=8, mem_budget=self.mem_budget)
        scanned, lrin, fetched = self._cover(byl)
        self.unmarked -= fetched
        lrout = ws.unique("unb.lrout")
        try:
            list_rank(ws, lrin, lrout, mem_budget=self.mem_budget)
        except ListRankError as exc:
            raise InvertError("piece chains are inconsistent; the transform "
                              "file looks corrupt") from exc
        bya = ws.unique("unb.bya")
        external_sort(ws, scanned, bya, record_size=REC_SIZE, key_offset=0,
                      key_width=8, mem_budget=self.mem_budget)
        wide = self._widen(bya, lrout)
        byd = ws.unique("unb.byd")
        external_sort(ws, wide, byd, record_size=WIDE_SIZE, key_offset=48,
                      key_width=8, mem_budget=self.mem_budget)
        byc = ws.unique("unb.byc")
        external_sort(ws, byd, byc, record_size=WIDE_SIZE, key_offset=40,
                      key_width=8, mem_budget=self.mem_budget)
        merged = self._rewrite(byc)
        planted = self._plant(fetched)
        self.records = merged + planted

    def _cover(self, byl):
        """Sweep all rows once, serving every piece's wanted row."""
        ws = self.ws
        scanned = ws.unique("unb.scan")
        lrin = ws.unique("unb.lrin")
        marks2 = ws.unique("unb.marks")
        ws.write_file(scanned, np.empty(0, np.uint8))
        ws.write_file(lrin, np.empty(0, np.uint8))
        counts = np.zeros(257, np.int64)
        rtotal = ws.size(byl) // REC_SIZE
        rpos = 0
        rb = np.empty(0, REC_DT)
        links = np.empty(0, np.int64)
        flags = np.empty(0, np.uint8)
        grabs = np.empty(0, np.uint16)
        steps = np.empty(0, np.int64)
        fetched = 0
        row0 = 1
        while row0 <= self.total:
            rows = min(ROW_CHUNK, self.total - row0 + 1)
            row1 = row0 + rows
            while rpos < rtotal and (links.size == 0 or links[-1] < row1):
                take = min(REC_CHUNK, rtotal - rpos)
                arr = _records(ws.read_range(byl, rpos * REC_SIZE,
                                             take * REC_SIZE), REC_DT)
                rpos += take
                rb = np.concatenate((rb, arr))
                links = np.concatenate((links, arr["link"].astype(np.int64)))
                flags = np.concatenate((flags, arr["flag"].astype(np.uint8)))
                grabs = np.concatenate((grabs, np.zeros(take, np.uint16)))
                steps = np.concatenate((steps, np.zeros(take, np.int64)))
            codes = self._code_rows(row0, rows)
            mk = self._mark_rows(row0, rows)
            lp, got, hit = _k.cover_round_scan(codes, mk, row0, counts,
                                               self.below, links, 0, flags,
                                               grabs, steps)
            fetched += got
            if hit >= 0:
                self.right_off = int(rb["len"][hit])
            ws.append(marks2, np.packbits(mk))
            if lp:
                self._emit_scanned(scanned, lrin, rb[:lp], flags[:lp],
                                   grabs[:lp], steps[:lp])
                rb = rb[lp:].copy()
                links = links[lp:].copy()
                flags = flags[lp:].copy()
                grabs = grabs[lp:].copy()
                steps = steps[lp:].copy()
            row0 = row1
        if rb.size or rpos < rtotal:
            raise InvertError("a cursor points outside the table; the "
                              "transform file looks corrupt")
        ws.delete(byl)
        ws.delete(self.marks)
        self.marks = marks2
        return scanned, lrin, fetched

    def _emit_scanned(self, scanned, lrin, part, flags, grabs, steps):
        ws = self.ws
        state = flags & (FETCHED | QUEUED)
        if (((state != FETCHED) & (state != QUEUED))).any():
            raise InvertError("a piece neither advanced nor queued; the "
                              "transform file looks corrupt")
        out = part.copy()
        out["flag"] = flags
        took = state == FETCHED
        out["order"][took] = steps[took].astype(np.uint64)
        out["fetch"][took] = ((grabs[took].astype(np.int64) - 1)
                              & 0xFF).astype(np.uint8)
        ws.append(scanned, _raw(out))
        pairs = np.zeros((out.size, 2), "<u8")
        pairs[:, 0] = out["anchor"]
        pairs[~took, 1] = out["link"][~took]
        ws.append(lrin, _raw(pairs))

    def _widen(self, bya, lrout):
        """Attach each piece's chain id and position, record for record."""
        ws = self.ws
        wide = ws.unique("unb.wide")
        ws.write_file(wide, np.empty(0, np.uint8))
        atotal = ws.size(bya) // REC_SIZE
        if ws.size(lrout) // 32 != atotal:
            raise InvertError("chain ranking lost pieces; the transform "
                              "file looks corrupt")
        pos = 0
        while pos < atotal:
            take = min(REC_CHUNK, atotal - pos)
            ra = _records(ws.read_range(bya, pos * REC_SIZE,
                                        take * REC_SIZE), REC_DT)
            lm = np.frombuffer(ws.read_range(lrout, pos * 32,
                                             take * 32).tobytes(),
                               "<u8").astype(np.int64).reshape(-1, 4)
            if not np.array_equal(ra["anchor"].astype(np.int64), lm[:, 0]):
                raise InvertError("chain ranks do not line up; the "
                                  "transform file looks corrupt")
            w = np.zeros(take, WIDE_DT)
            for name in REC_DT.names:
                w[name] = ra[name]
            w["cid"] = lm[:, 1].astype(np.uint64)
            w["d"] = (lm[:, 3] - 1 - lm[:, 2]).astype(np.uint64)
            ws.append(wide, _raw(w))
            pos += take
        ws.delete(bya)
        ws.delete(lrout)
        return wide

    def _rewrite(self, byc):
        """Splice every chain into one piece; payloads move left-to-right.

        The stream arrives sorted by chain id, so each chain is one
        contiguous run; whole chunks of complete runs are spliced at
        once and only a run crossing a chunk edge is carried over.
        """
        ws = self.ws
        pay2 = ws.unique("unb.pay")
        rec2 = ws.unique("unb.rec")
        ws.write_file(pay2, np.empty(0, np.uint8))
        ws.write_file(rec2, np.empty(0, np.uint8))
        payimg = None
        phandle = None
        if self.pay_size <= self.mem_budget:
            payimg = ws.read_file(self.pay)
        else:
            phandle = ws.open_read(self.pay)
        total = ws.size(byc) // WIDE_SIZE
        merged = 0
        pay_off = 0
        pos = 0
        pending = []

        def flush(mem, starts):
            nonlocal merged, pay_off
            pay_off, n_new = self._flush(mem, starts, pay2, rec2, payimg,
                                         phandle, pay_off)
            merged += n_new

        try:
            while pos < total:
                take = min(REC_CHUNK, total - pos)
                w = _records(ws.read_range(byc, pos * WIDE_SIZE,
                                           take * WIDE_SIZE), WIDE_DT)
                pos += take
                cids = w["cid"]
                if pending:
                    pcid = pending[0]["cid"][0]
                    e = int(np.searchsorted(cids, pcid, side="right"))
                    pending.append(w[:e])
                    if e == w.size and pos < total:
                        continue
                    flush(np.concatenate(pending), np.zeros(1, np.int64))
                    pending = []
                    w = w[e:]
                    cids = w["cid"]
                if w.size == 0:
                    continue
                if pos < total:
                    hold = int(np.searchsorted(cids, cids[-1], side="left"))
                    pending = [w[hold:].copy()]
                    w = w[:hold]
                    cids = w["cid"]
                    if w.size == 0:
                        continue
                starts = np.flatnonzero(
                    np.concatenate(([True], cids[1:] != cids[:-1])))
                flush(w, starts.astype(np.int64))
            if pending:
                flush(np.concatenate(pending), np.zeros(1, np.int64))
        finally:
            if phandle is not None:
                phandle.close()
        ws.delete(byc)
        ws.delete(self.pay)
        self.pay = pay2
        self.pay_size = pay_off
        self.rec = rec2
        return merged

    def _flush(self, mem, starts, pay2, rec2, payimg, phandle, pay_off):
        ws = self.ws
        bounds = np.concatenate((starts, [mem.size]))
        counts = np.diff(bounds)
        lasts = bounds[1:] - 1
        m_len = mem["len"].astype(np.int64)
        want = np.arange(mem.size, dtype=np.int64) - np.repeat(starts, counts)
        if not np.array_equal(mem["d"].astype(np.int64), want):
            raise InvertError("a merge chain is torn; the transform file "
                              "looks corrupt")
        first_mask = np.zeros(mem.size, bool)
        first_mask[starts] = True
        took = (mem["flag"] & FETCHED) != 0
        if (took & ~first_mask).any():
            raise InvertError("a chain advanced in the middle; the "
                              "transform file looks corrupt")
        has_f = took[starts]
        g_len = np.add.reduceat(m_len, starts)
        sizes = 4 + has_f.astype(np.int64) + g_len
        loc = np.zeros(sizes.size + 1, np.int64)
        np.cumsum(sizes, out=loc[1:])
        dst = np.zeros(int(loc[-1]), np.uint8)
        if payimg is not None:
            src = payimg
            m_src = mem["off"].astype(np.int64)
        else:
            parts = [phandle.pread(int(o), int(l))
                     for o, l in zip(mem["off"], m_len)]
            src = np.concatenate(parts)
            if src.size != int(m_len.sum()):
                raise InvertError("payload store truncated")
            self.ledger.count_read(src.size)
            m_src = np.zeros(mem.size, np.int64)
            np.cumsum(m_len[:-1], out=m_src[1:])
        _k.gather_groups(src, m_src, m_len, bounds, mem["fetch"][starts],
                         has_f.astype(np.uint8), loc[:-1], dst)
        ws.append(pay2, dst)

        nr = np.zeros(counts.size, REC_DT)
        nr["anchor"] = mem["anchor"][lasts]
        nr["link"] = np.where(has_f, mem["order"][starts], np.uint64(0))
        nr["off"] = (pay_off + loc[:-1] + 4).astype(np.uint64)
        nr["len"] = (g_len + has_f).astype(np.uint32)
        term = mem["flag"] & HAS_TERM
        nr["flag"] = np.bitwise_or.reduceat(term, starts)
        ws.append(rec2, _raw(nr))

        hit = np.flatnonzero(term)
        if hit.size:
            i = int(hit[0])
            g = int(np.searchsorted(bounds, i, side="right")) - 1
            self.right_off += int(m_len[i + 1:int(bounds[g + 1])].sum())
        return pay_off + int(loc[-1]), counts.size

    def _plant(self, fetched):
        """Start fresh pieces on the first still-unowned rows."""
        need = self.k - fetched
        if need <= 0 or self.unmarked <= 0:
            return 0
        need = min(need, self.unmarked)
        ws = self.ws
        rows_out = np.zeros(need, np.int64)
        links_out = np.zeros(need, np.int64)
        codes_out = np.zeros(need, np.uint16)
        counts = np.zeros(257, np.int64)
        marks3 = ws.unique("unb.marks")
        found = 0
        row0 = 1
        bytes_done = 0
        while row0 <= self.total:
            rows = min(ROW_CHUNK, self.total - row0 + 1)
            codes = self._code_rows(row0, rows)
            mk = self._mark_rows(row0, rows)
            found = _k.plant_scan(codes, mk, row0, counts, self.below, need,
                                  rows_out, links_out, codes_out, found)
            packed = np.packbits(mk)
            ws.append(marks3, packed)
            bytes_done += packed.size
            row0 += rows
            if found == need:
                total_bytes = (self.total + 7) // 8
                if bytes_done < total_bytes:
                    ws.append(marks3, ws.read_range(self.marks, bytes_done,
                                                    total_bytes - bytes_done))
                break
        if found != need:
            raise InvertError("unmarked rows went missing; the transform "
                              "file looks corrupt")
        ws.delete(self.marks)
        self.marks = marks3

        buf = np.zeros(5 * found, np.uint8)
        buf[0::5] = 1
        buf[4::5] = ((codes_out.astype(np.int64) - 1) & 0xFF).astype(np.uint8)
        ws.append(self.pay, buf)
        nr = np.zeros(found, REC_DT)
        nr["anchor"] = rows_out.astype(np.uint64)
        nr["link"] = links_out.astype(np.uint64)
        nr["off"] = (self.pay_size + np.arange(found, dtype=np.int64) * 5
                     + 4).astype(np.uint64)
        nr["len"] = 1
        nr["flag"] = np.where(codes_out == 0, HAS_TERM, 0).astype(np.uint8)
        ws.append(self.rec, _raw(nr))
        if (codes_out == 0).any():
            self.right_off = 0
        self.pay_size += 5 * found
        self.unmarked -= found
        return found

    # -- output -----------------------------------------------------------

    def finish(self, out):
        ws = self.ws
        rec = _records(ws.read_file(self.rec), REC_DT)
        if rec.size != 1:
            raise InvertError("pieces failed to converge; the transform "
                              "file looks corrupt")
        length = int(rec["len"][0])
        if length != self.total or (int(rec["flag"][0]) & HAS_TERM) == 0 \
                or not 0 <= self.right_off < self.total:
            raise InvertError("recovered text has the wrong shape; the "
                              "transform file looks corrupt")
        off = int(rec["off"][0])
        cut = self.total - 1 - self.right_off
        handle = ws.open_read(self.pay)
        try:
            for a, b in ((cut + 1, self.total), (0, cut)):
                pos = a
                while pos < b:
                    take = min(OUT_CHUNK, b - pos)
                    arr = handle.pread(off + pos, take)
                    if arr.size != take:
                        raise InvertError("payload store truncated")
                    self.ledger.count_read(take)
                    out.append(arr)
                    pos += take
        finally:
            handle.close()
        self.ledger.count_pass()


def scan_unbwt(bwt_path, out_path, *, mem_budget=256 << 20, workdir=None,
               diagnostics=None) -> dict:
    """Invert bwt_path into out_path with sequential sweeps; returns stats.

    diagnostics, if a dict, receives the cursor budget and the per-round
    piece and owned-row counts.
    """
    ledger = SpaceLedger()
    root = tempfile.mkdtemp(prefix="bwtscan-", dir=workdir)
    ws = DiskWorkspace(root, ledger)
    out = OutputFile(out_path, ledger)
    inv = _Inversion(ws, ledger, mem_budget)
    try:
        inv.load(bwt_path)
        inv.run()
        inv.finish(out)
    finally:
        inv.close()
        out.close()
        ws.cleanup()
        ws.destroy()
    if diagnostics is not None:
        diagnostics["k"] = inv.k
        diagnostics["round_records"] = inv.round_records
        diagnostics["round_marks"] = inv.round_marks
    return ledger.stats()


def naive_unbwt(bwt_path, out_path) -> dict:
    """Reference inversion: whole file in memory, one step per character."""
    ledger = SpaceLedger()
    n, primary0, payload = read_bwt_file(bwt_path)
    ledger.count_read(os.path.getsize(bwt_path))
    body = np.insert(np.frombuffer(payload, np.uint8).astype(np.uint16) + 1,
                     primary0, np.uint16(0))
    total = n + 1
    codes = np.zeros(total + 1, np.uint16)
    codes[1:] = body
    hist = np.bincount(body, minlength=257).astype(np.int64)
    below = np.concatenate(([0], np.cumsum(hist)[:-1]))
    order = np.argsort(body, kind="stable")
    sc = body[order].astype(np.int64)
    starts = np.searchsorted(sc, sc, side="left")
    occ = np.empty(total, np.int64)
    occ[order] = np.arange(total) - starts + 1
    lf = np.zeros(total + 1, np.int64)
    lf[1:] = below[body.astype(np.int64)] + occ
    try:
        rev, final = _k.lf_chase(codes, lf, 1, n)
    except ValueError as exc:
        raise InvertError("the walk hit the terminator early; the "
                          "transform file looks corrupt") from exc
    if final != primary0 + 1:
        raise InvertError("the walk did not close on the primary row; the "
                          "transform file looks corrupt")
    out = OutputFile(out_path, ledger)
    try:
        out.append(rev[::-1])
    finally:
        out.close()
    ledger.count_pass()
    return ledger.stats()
