"""Numba kernels for the hot inner loops.

Everything here is plain arrays in, plain arrays out, so the callers own
all file handling. Kernels are cached to keep repeat runs cheap.
"""

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# varint / zigzag / run-length packing

@njit(cache=True)
def pack_runs(lens, chars):
    """Encode (length, byte) runs: LEB128 length then the byte."""
    total = 0
    for k in range(lens.size):
        v = lens[k]
        total += 2  # at least one length byte plus the char
        v >>= 7
        while v:
            total += 1
            v >>= 7
    out = np.empty(total, np.uint8)
    w = 0
    for k in range(lens.size):
        v = lens[k]
        while True:
            b = v & 0x7F
            v >>= 7
            if v:
                out[w] = b | 0x80
            else:
                out[w] = b
                w += 1
                break
            w += 1
        out[w] = chars[k]
        w += 1
    return out


@njit(cache=True)
def parse_runs(buf):
    """Parse complete (varint length, byte) pairs; returns (lens, chars, used)."""
    n = buf.size
    cap = n // 2 + 1
    lens = np.empty(cap, np.int64)
    chars = np.empty(cap, np.uint8)
    pos = 0
    cnt = 0
    while pos < n:
        v = 0
        shift = 0
        p = pos
        done = False
        while p < n:
            b = buf[p]
            v |= np.int64(b & 0x7F) << shift
            p += 1
            if b & 0x80 == 0:
                done = True
                break
            shift += 7
            if shift > 63:
                raise ValueError("run length varint too long")
        if not done or p >= n:
            break  # partial pair, caller keeps the tail
        lens[cnt] = v
        chars[cnt] = buf[p]
        cnt += 1
        pos = p + 1
    return lens[:cnt], chars[:cnt], pos


@njit(cache=True)
def zigzag_pack(vals):
    total = 0
    for k in range(vals.size):
        z = np.uint64(vals[k] << 1) ^ np.uint64(vals[k] >> 63)
        total += 1
        z >>= np.uint64(7)
        while z:
            total += 1
            z >>= np.uint64(7)
    out = np.empty(total, np.uint8)
    w = 0
    for k in range(vals.size):
        z = np.uint64(vals[k] << 1) ^ np.uint64(vals[k] >> 63)
        while True:
            b = np.uint8(z & np.uint64(0x7F))
            z >>= np.uint64(7)
            if z:
                out[w] = b | 0x80
            else:
                out[w] = b
                w += 1
                break
            w += 1
    return out


@njit(cache=True)
def zigzag_unpack(buf):
    n = buf.size
    vals = np.empty(n, np.int64)
    pos = 0
    cnt = 0
    while pos < n:
        z = np.uint64(0)
        shift = np.uint64(0)
        p = pos
        done = False
        while p < n:
            b = buf[p]
            z |= np.uint64(b & 0x7F) << shift
            p += 1
            if b & 0x80 == 0:
                done = True
                break
            shift += np.uint64(7)
            if shift > 63:
                raise ValueError("delta varint too long")
        if not done:
            break
        vals[cnt] = np.int64(z >> np.uint64(1)) ^ -np.int64(z & np.uint64(1))
        cnt += 1
        pos = p
    return vals[:cnt], pos


# ---------------------------------------------------------------------------
# per-pass backward scan

@njit(cache=True)
def region_scan(text_rev, flags_in, i0, below, occ_starts, occ_rows,
                head_rank, last_char, gap, flags_out):
    """One chunk of the backward walk over the processed region.

    text_rev holds older characters in scan order (position N-1 downward).
    For each step: record the comparison flag and gap slot of the position
    one to the right, then step the rank count across text_rev[idx].
    Returns the updated rank count.
    """
    i = i0
    for idx in range(text_rev.size):
        if i >= head_rank:
            flags_out[idx] = 1
        else:
            flags_out[idx] = 0
        gap[i] += 1
        c = text_rev[idx]
        lo = occ_starts[c]
        hi = occ_starts[c + 1]
        while lo < hi:
            mid = (lo + hi) >> 1
            if occ_rows[mid] <= i:
                lo = mid + 1
            else:
                hi = mid
        j = below[c] + (lo - occ_starts[c])
        if c == last_char and flags_in[idx] == 1:
            j += 1
        i = j
    return i


# ---------------------------------------------------------------------------
# comparison-flag tie break for the block sorter

@njit(cache=True)
def _suffix_less(a, b, flags):
    # a, b are 0-based block offsets whose extended windows tied; the flag
    # at their distance settles which continuation is smaller
    if a < b:
        return flags[b - a - 1] == 1
    return flags[a - b - 1] == 0


@njit(cache=True)
def sort_tied_groups(perm, group_starts, group_ends, flags):
    """Mergesort each perm[s:e] slice with the flag comparator, in place."""
    for g in range(group_starts.size):
        s = group_starts[g]
        e = group_ends[g]
        ln = e - s
        if ln <= 1:
            continue
        buf = np.empty(ln, np.int64)
        width = 1
        while width < ln:
            lo = 0
            while lo < ln:
                mid = lo + width
                if mid > ln:
                    mid = ln
                hi = lo + 2 * width
                if hi > ln:
                    hi = ln
                a = lo
                b = mid
                t = lo
                while a < mid and b < hi:
                    if _suffix_less(perm[s + b], perm[s + a], flags):
                        buf[t] = perm[s + b]
                        b += 1
                    else:
                        buf[t] = perm[s + a]
                        a += 1
                    t += 1
                while a < mid:
                    buf[t] = perm[s + a]
                    a += 1
                    t += 1
                while b < hi:
                    buf[t] = perm[s + b]
                    b += 1
                    t += 1
                lo += 2 * width
            for t in range(ln):
                perm[s + t] = buf[t]
            width *= 2


# ---------------------------------------------------------------------------
# inversion round scans

@njit(cache=True)
def cover_round_scan(codes, marks, row0, counts, below, links, lp0,
                     flags, fetches, newlinks):
    """Forward sweep of one round: serve link-sorted records from a chunk.

    codes/marks cover rows [row0, row0+len); links is the sorted link
    column, lp0 the first unserved record. Unmarked targets hand over
    their character and a stepped link; marked targets flag the record
    as blocked behind its left neighbour. Returns (lp, fetched, sent_at).
    """
    lp = lp0
    fetched = 0
    sent_at = np.int64(-1)
    for t in range(codes.size):
        row = row0 + t
        c = codes[t]
        counts[c] += 1
        while lp < links.size and links[lp] == row:
            if marks[t] == 0:
                marks[t] = 1
                fetches[lp] = c
                flags[lp] |= 1
                if c == 0:
                    flags[lp] |= 4
                    sent_at = lp
                newlinks[lp] = below[c] + counts[c]
                fetched += 1
            else:
                flags[lp] |= 2
            lp += 1
    return lp, fetched, sent_at


@njit(cache=True)
def plant_scan(codes, marks, row0, counts, below, need, out_rows,
               out_links, out_codes, found0):
    """Claim the first unmarked rows as fresh one-character pieces."""
    found = found0
    for t in range(codes.size):
        c = codes[t]
        counts[c] += 1
        if found < need and marks[t] == 0:
            marks[t] = 1
            out_rows[found] = row0 + t
            out_links[found] = below[c] + counts[c]
            out_codes[found] = c
            found += 1
    return found


@njit(cache=True)
def gather_groups(src, m_src, m_len, g_bounds, g_fetchb, g_hasf, g_dst, dst):
    """Concatenate member payloads group by group into stored records.

    Each group gets a u32 length prefix, an optional fresh head byte,
    then its members' bytes in order. m_src/m_len locate member payloads
    inside src; g_bounds delimits groups; g_dst holds each group's
    output offset within dst.
    """
    for g in range(g_bounds.size - 1):
        lo = g_bounds[g]
        hi = g_bounds[g + 1]
        total = 0
        for t in range(lo, hi):
            total += m_len[t]
        newlen = total + (1 if g_hasf[g] else 0)
        w = g_dst[g]
        dst[w] = newlen & 0xFF
        dst[w + 1] = (newlen >> 8) & 0xFF
        dst[w + 2] = (newlen >> 16) & 0xFF
        dst[w + 3] = (newlen >> 24) & 0xFF
        w += 4
        if g_hasf[g]:
            dst[w] = g_fetchb[g]
            w += 1
        for t in range(lo, hi):
            s = m_src[t]
            ln = m_len[t]
            for q in range(ln):
                dst[w + q] = src[s + q]
            w += ln


@njit(cache=True)
def lf_chase(codes, lf, start_row, n_out):
    """Walk the predecessor map collecting characters (text comes out reversed)."""
    out = np.empty(n_out, np.uint8)
    r = start_row
    for k in range(n_out):
        c = codes[r]
        if c == 0:
            raise ValueError("terminator reached too early")
        out[k] = np.uint8(c - 1)
        r = lf[r]
    return out, r


# ---------------------------------------------------------------------------
# in-memory list ranking (fast path)

@njit(cache=True)
def chase_chains(ids, succ):
    """Rank every node of disjoint chains/cycles; ids sorted ascending.

    succ values are node ids (0 = none), resolved to indices by binary
    search over ids. Cycles are cut at their smallest member, which then
    acts as the chain tail. Returns (cid, dist, clen) where dist counts
    steps from the chain head and clen is the chain size.
    """
    n = ids.size
    cid = np.zeros(n, np.int64)
    dist = np.zeros(n, np.int64)
    clen = np.zeros(n, np.int64)
    has_in = np.zeros(n, np.uint8)
    nxt = np.empty(n, np.int64)
    for k in range(n):
        s = succ[k]
        if s == 0:
            nxt[k] = -1
        else:
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                if ids[mid] < s:
                    lo = mid + 1
                else:
                    hi = mid
            if lo >= n or ids[lo] != s:
                raise ValueError("successor refers to a missing id")
            nxt[k] = lo
            has_in[lo] = 1
    done = np.zeros(n, np.uint8)
    for k in range(n):
        if has_in[k] == 0:
            # chain head
            ln = 0
            p = k
            while True:
                done[p] = 1
                dist[p] = ln
                ln += 1
                q = nxt[p]
                if q < 0:
                    break
                p = q
            p = k
            for _ in range(ln):
                cid[p] = ids[k]
                clen[p] = ln
                if nxt[p] < 0:
                    break
                p = nxt[p]
    for k in range(n):
        if done[k] == 0:
            # smallest unvisited id is the cut point of its cycle; the node
            # it pointed at becomes the head
            head = nxt[k]
            nxt[k] = -1
            ln = 0
            p = head
            while True:
                done[p] = 1
                dist[p] = ln
                ln += 1
                q = nxt[p]
                if q < 0:
                    break
                p = q
            p = head
            for _ in range(ln):
                cid[p] = ids[head]
                clen[p] = ln
                if nxt[p] < 0:
                    break
                p = nxt[p]
    return cid, dist, clen
