"""List ranking over successor files.

Input: fixed 16-byte records (id u64, succ u64), both little-endian.
Ids are distinct and nonzero; succ is another record's id or 0 for none.
The records form disjoint chains, possibly closing into cycles; a cycle
is cut at its smallest member, which then acts as the chain tail, and
its old successor becomes the head.

Output: 32-byte records (id, cid, rank, clen) sorted by id, where cid is
the id of the chain head, rank counts steps from that head, and clen is
the chain length.

Small inputs are ranked in memory in one go.  Larger ones go through
pointer doubling: every record tracks a moving target, the distance
walked so far, and eventually the id of its chain tail; one join pass
per doubling step serves the lookups from an id-sorted copy.  A pass
that resolves nothing means every remaining record sits on a cycle, so
the smallest of them is declared a tail and every other open walk is
restarted from its kept original successor; restarting is what keeps
the walked distances true once the cycle is broken.  The doubling route
exists for inputs beyond the memory budget and favours obvious
correctness over per-row speed; both routes produce identical files.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as _k
from .extsort import external_sort

REC_IN = 16
REC_STATE = 40
REC_OUT = 32

_CHUNK_ROWS = 1 << 15


class ListRankError(ValueError):
    pass


def _to_matrix(raw: np.ndarray, cols: int) -> np.ndarray:
    return np.frombuffer(raw.tobytes(), "<u8").astype(np.int64).reshape(-1, cols)


def _from_matrix(mat: np.ndarray) -> np.ndarray:
    return np.frombuffer(mat.astype("<u8").tobytes(), np.uint8)


def _stream_matrix(ws, name, cols, chunk=_CHUNK_ROWS):
    width = 8 * cols
    total = ws.size(name) // width
    off = 0
    while off < total:
        take = min(chunk, total - off)
        yield _to_matrix(ws.read_range(name, off * width, take * width), cols)
        off += take


class _MatrixWriter:
    def __init__(self, ws, name):
        self._ws = ws
        self._name = name
        ws.write_file(name, np.empty(0, np.uint8))

    def write(self, mat):
        if mat.shape[0]:
            self._ws.append(self._name, _from_matrix(mat))


def _rank_in_memory(ws, in_name, out_name, delete_input):
    raw = ws.read_file(in_name)
    if delete_input:
        ws.delete(in_name)
    pairs = _to_matrix(raw, 2)
    if pairs.shape[0] == 0:
        ws.write_file(out_name, np.empty(0, np.uint8))
        return
    order = np.argsort(pairs[:, 0], kind="stable")
    ids = np.ascontiguousarray(pairs[order, 0])
    succ = np.ascontiguousarray(pairs[order, 1])
    if (ids < 1).any():
        raise ListRankError("ids must be positive")
    if ids.size > 1 and (ids[1:] == ids[:-1]).any():
        raise ListRankError("duplicate id")
    try:
        cid, dist, clen = _k.chase_chains(ids, succ)
    except ValueError as exc:
        raise ListRankError(str(exc)) from exc
    _write_sorted_out(ws, out_name, np.stack([ids, cid, dist, clen], axis=1))


def _write_sorted_out(ws, out_name, mat):
    ws.write_file(out_name, _from_matrix(mat))


def _doubling_pass(ws, master, mem_budget):
    """One pointer jump for every unresolved record.

    master is (id, ptr, w, tid, succ) sorted by id; tid 0 marks
    unresolved.  Returns (new_master_name, resolutions).
    """
    byptr = ws.unique("lr.byptr")
    external_sort(ws, master, byptr, record_size=REC_STATE, key_offset=8,
                  key_width=8, mem_budget=mem_budget, delete_input=False)

    joined = ws.unique("lr.joined")
    writer = _MatrixWriter(ws, joined)
    resolved = 0

    lookup = _stream_matrix(ws, master, 5)
    lk = np.empty((0, 5), np.int64)
    lk_pos = 0

    def pull_lookup(target):
        # advance the id-sorted side; never steps past an equal id, so
        # converging pointers can look the same row up repeatedly
        nonlocal lk, lk_pos
        while True:
            while lk_pos < lk.shape[0] and lk[lk_pos, 0] < target:
                lk_pos += 1
            if lk_pos < lk.shape[0]:
                if lk[lk_pos, 0] != target:
                    raise ListRankError("successor refers to a missing id")
                return lk[lk_pos]
            nxt = next(lookup, None)
            if nxt is None:
                raise ListRankError("successor refers to a missing id")
            lk = nxt
            lk_pos = 0

    for batch in _stream_matrix(ws, byptr, 5):
        batch = batch.copy()
        for row in batch:
            if row[3] != 0:
                continue
            target = pull_lookup(row[1])
            row[2] += target[2]
            if target[3] != 0:
                row[3] = target[3]
                row[1] = 0
                resolved += 1
            else:
                row[1] = target[1]
        writer.write(batch)
    ws.delete(byptr)
    ws.delete(master)

    new_master = ws.unique("lr.master")
    external_sort(ws, joined, new_master, record_size=REC_STATE,
                  key_offset=0, key_width=8, mem_budget=mem_budget)
    return new_master, resolved


def _cut_smallest(ws, master):
    """Break one cycle: the smallest unresolved id becomes a tail.

    A stalled pass leaves only cycle members unresolved, and their
    walked distances have wrapped, so every other open walk restarts
    from its original successor with distance one.
    """
    replaced = ws.unique("lr.master")
    writer = _MatrixWriter(ws, replaced)
    done = False
    for batch in _stream_matrix(ws, master, 5):
        open_rows = batch[:, 3] == 0
        if open_rows.any():
            batch = batch.copy()
            batch[open_rows, 1] = batch[open_rows, 4]
            batch[open_rows, 2] = 1
            if not done:
                k = np.flatnonzero(open_rows)[0]
                batch[k, 3] = batch[k, 0]
                batch[k, 1] = 0
                batch[k, 2] = 0
                done = True
        writer.write(batch)
    ws.delete(master)
    if not done:
        raise ListRankError("no unresolved record to cut")
    return replaced


def _rank_external(ws, in_name, out_name, mem_budget, delete_input):
    sorted_in = ws.unique("lr.in")
    external_sort(ws, in_name, sorted_in, record_size=REC_IN, key_offset=0,
                  key_width=8, mem_budget=mem_budget,
                  delete_input=delete_input)

    master = ws.unique("lr.master")
    writer = _MatrixWriter(ws, master)
    total = 0
    resolved_total = 0
    prev_id = 0
    for batch in _stream_matrix(ws, sorted_in, 2):
        ids = batch[:, 0]
        succ = batch[:, 1]
        if (ids < 1).any():
            raise ListRankError("ids must be positive")
        if ids[0] == prev_id or (ids.size > 1 and
                                 (ids[1:] == ids[:-1]).any()):
            raise ListRankError("duplicate id")
        prev_id = int(ids[-1])
        terminal = succ == 0
        writer.write(np.stack([
            ids,
            np.where(terminal, 0, succ),
            np.where(terminal, 0, 1),
            np.where(terminal, ids, 0),
            succ,
        ], axis=1))
        total += ids.size
        resolved_total += int(terminal.sum())
    ws.delete(sorted_in)

    while resolved_total < total:
        master, got = _doubling_pass(ws, master, mem_budget)
        if got == 0:
            master = _cut_smallest(ws, master)
            got = 1
        resolved_total += got

    # group by tail id; each chain's head is the row that walked furthest
    bytid = ws.unique("lr.bytid")
    external_sort(ws, master, bytid, record_size=REC_STATE, key_offset=24,
                  key_width=8, mem_budget=mem_budget)
    side_name = ws.unique("lr.side")
    side = _MatrixWriter(ws, side_name)
    cur = None
    for batch in _stream_matrix(ws, bytid, 5):
        rows = []
        for row in batch:
            if cur is None or row[3] != cur[0]:
                if cur is not None:
                    rows.append(cur)
                cur = [int(row[3]), int(row[2]), int(row[0])]
            elif row[2] > cur[1]:
                cur[1] = int(row[2])
                cur[2] = int(row[0])
        if rows:
            side.write(np.asarray(rows, np.int64).reshape(-1, 3))
    if cur is not None:
        side.write(np.asarray([cur], np.int64))

    unsorted_out = ws.unique("lr.out")
    writer = _MatrixWriter(ws, unsorted_out)
    side_stream = _stream_matrix(ws, side_name, 3)
    sc = np.empty((0, 3), np.int64)
    sc_pos = -1
    tid = None
    maxw = head = 0
    for batch in _stream_matrix(ws, bytid, 5):
        out = np.empty((batch.shape[0], 4), np.int64)
        for k in range(batch.shape[0]):
            row = batch[k]
            if row[3] != tid:
                sc_pos += 1
                if sc_pos >= sc.shape[0]:
                    sc = next(side_stream)
                    sc_pos = 0
                tid, maxw, head = (int(sc[sc_pos, 0]), int(sc[sc_pos, 1]),
                                   int(sc[sc_pos, 2]))
                if tid != row[3]:
                    raise ListRankError("chain summary out of step")
            out[k, 0] = row[0]
            out[k, 1] = head
            out[k, 2] = maxw - row[2]
            out[k, 3] = maxw + 1
        writer.write(out)
    ws.delete(bytid)
    ws.delete(side_name)
    external_sort(ws, unsorted_out, out_name, record_size=REC_OUT,
                  key_offset=0, key_width=8, mem_budget=mem_budget)


def list_rank(ws, in_name, out_name, *, mem_budget=64 << 20,
              delete_input=True) -> None:
    """Rank the chain file at in_name into out_name (see module docs)."""
    size = ws.size(in_name)
    if size % REC_IN:
        raise ListRankError("record file has a partial record")
    if size == 0:
        if delete_input:
            ws.delete(in_name)
        ws.write_file(out_name, np.empty(0, np.uint8))
        return
    if size <= mem_budget:
        _rank_in_memory(ws, in_name, out_name, delete_input)
    else:
        _rank_external(ws, in_name, out_name, mem_budget, delete_input)


def rank_pairs(ids: np.ndarray, succ: np.ndarray):
    """In-memory convenience wrapper: returns (cid, rank, clen) aligned
    with ids, which must be sorted ascending."""
    return _k.chase_chains(np.asarray(ids, np.int64),
                           np.asarray(succ, np.int64))
