"""Bounded-memory external merge sort over fixed-size records.

Keys are unsigned little-endian integers embedded in each record. The
sort is stable: records with equal keys keep their input order, which
the callers rely on. Sorted runs are formed under the memory budget,
then merged with a bounded fan-in; more than `FANOUT` runs trigger
extra merge levels.
"""

from __future__ import annotations

import numpy as np

from .streams import StreamError

FANOUT = 64


def _key_view(flat: np.ndarray, record_size: int, key_offset: int,
              key_width: int) -> np.ndarray:
    recs = flat.reshape(-1, record_size)
    if key_width == 8 and key_offset % 8 == 0 and record_size % 8 == 0:
        return recs.view(np.uint64)[:, key_offset // 8].copy()
    padded = np.zeros((recs.shape[0], 8), np.uint8)
    padded[:, :key_width] = recs[:, key_offset:key_offset + key_width]
    return padded.view(np.uint64).ravel()


class _Run:
    def __init__(self, ws, name, record_size):
        self.ws = ws
        self.name = name
        self.rec = record_size
        self.size = ws.size(name)
        self.pos = 0
        self.buf = np.empty((0, record_size), np.uint8)
        self.keys = np.empty(0, np.uint64)
        self.off = 0
        self._h = ws.open_read(name)

    def disk_left(self) -> bool:
        return self.pos < self.size

    def buffered(self) -> int:
        return self.keys.size - self.off

    def refill(self, records, key_offset, key_width):
        take = min(records * self.rec, self.size - self.pos)
        if take <= 0:
            return
        arr = self._h.pread(self.pos, take)
        if arr.size != take:
            raise StreamError("short read while merging runs")
        self.ws.ledger.count_read(take)
        self.pos += take
        if self.off:
            self.buf = self.buf[self.off:]
            self.keys = self.keys[self.off:]
            self.off = 0
        self.buf = np.concatenate((self.buf, arr.reshape(-1, self.rec)))
        self.keys = np.concatenate(
            (self.keys, _key_view(arr, self.rec, key_offset, key_width)))

    def finished(self) -> bool:
        return not self.disk_left() and self.buffered() == 0

    def close(self):
        self._h.close()
        self.ws.delete(self.name)


def _merge_runs(ws, names, out_name, record_size, key_offset, key_width,
                mem_budget):
    per_run = max(1, mem_budget // (len(names) + 1) // record_size)
    runs = [_Run(ws, nm, record_size) for nm in names]
    out = ws.writer(out_name)
    try:
        while True:
            for r in runs:
                if r.buffered() == 0 and r.disk_left():
                    r.refill(per_run, key_offset, key_width)
            live = [r for r in runs if not r.finished()]
            if not live:
                break
            open_runs = [r for r in live if r.disk_left()]
            if not open_runs:
                # everything is buffered, emit the lot
                chunks = [r.buf[r.off:] for r in live]
                keys = np.concatenate([r.keys[r.off:] for r in live])
                order = np.argsort(keys, kind="stable")
                out.write(np.concatenate(chunks)[order].ravel())
                for r in live:
                    r.off = r.keys.size
                break
            bound = min(int(r.keys[-1]) for r in open_runs)
            chunks = []
            keyparts = []
            emitted = 0
            for r in live:
                cut = int(np.searchsorted(r.keys[r.off:], bound, side="left"))
                if cut:
                    chunks.append(r.buf[r.off:r.off + cut])
                    keyparts.append(r.keys[r.off:r.off + cut])
                    r.off += cut
                    emitted += cut
            if emitted:
                keys = np.concatenate(keyparts)
                order = np.argsort(keys, kind="stable")
                out.write(np.concatenate(chunks)[order].ravel())
                continue
            # every buffered key equals the bound: stream the tie through,
            # run by run, to keep equal keys in input order
            for r in runs:
                while not r.finished():
                    cut = int(np.searchsorted(r.keys[r.off:], bound, side="right"))
                    if cut:
                        out.write(r.buf[r.off:r.off + cut].ravel())
                        r.off += cut
                    if r.buffered() == 0 and r.disk_left():
                        r.refill(per_run, key_offset, key_width)
                        continue
                    break
    finally:
        out.close()
        for r in runs:
            r.close()


def external_sort(ws, in_name, out_name, *, record_size, key_offset,
                  key_width, mem_budget, delete_input=True):
    """Sort a record stream by its embedded key, stably, within budget."""
    if key_width < 1 or key_width > 8:
        raise StreamError("key width must be 1..8 bytes")
    if key_offset + key_width > record_size:
        raise StreamError("key does not fit inside the record")
    total = ws.size(in_name)
    if total % record_size:
        raise StreamError("stream size is not a whole number of records")
    if mem_budget < 2 * record_size:
        raise StreamError("memory budget below two records")

    chunk_records = max(2, mem_budget // record_size)
    run_names = []
    rd = ws.reader(in_name)
    try:
        while True:
            arr = rd.read(chunk_records * record_size)
            if arr.size == 0:
                break
            keys = _key_view(arr, record_size, key_offset, key_width)
            order = np.argsort(keys, kind="stable")
            name = ws.unique("sortrun")
            ws.write_file(name, arr.reshape(-1, record_size)[order].ravel())
            run_names.append(name)
    finally:
        rd.close()
    if delete_input:
        ws.delete(in_name)

    if not run_names:
        ws.write_file(out_name, b"")
        return
    if len(run_names) == 1:
        # already sorted; adopt the single run
        ws.rename(run_names[0], out_name)
        return

    while len(run_names) > FANOUT:
        merged = []
        for i in range(0, len(run_names), FANOUT):
            group = run_names[i:i + FANOUT]
            if len(group) == 1:
                merged.append(group[0])
                continue
            name = ws.unique("sortlvl")
            _merge_runs(ws, group, name, record_size, key_offset, key_width,
                        mem_budget)
            merged.append(name)
        run_names = merged
    _merge_runs(ws, run_names, out_name, record_size, key_offset, key_width,
                mem_budget)
