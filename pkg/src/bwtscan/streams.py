"""Streams, codecs, and working-space accounting.

All temp traffic flows through a Workspace so byte counts and live temp
sizes are tallied in one place. Temp streams move strictly forward; the
raw input text is the only data ever read backward, which is why the
backward direction is restricted to plain bytes.
"""

from __future__ import annotations

import os
import threading
import time

import numpy as np

from . import _kernels as _k

PAGE_SIZE = 4096
IO_CHUNK = 1 << 20

IDENTITY = "identity"
RLE = "rle"
CODECS = (IDENTITY, RLE)


class StreamError(Exception):
    """Bad stream usage or a malformed encoded stream."""


def _as_u8(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        if data.dtype != np.uint8:
            raise TypeError("expected a uint8 array")
        return data
    return np.frombuffer(data, dtype=np.uint8)


# ---------------------------------------------------------------------------
# varints and run-length coding

def encode_varint(value: int) -> bytes:
    """LEB128: seven payload bits per byte, low bits first."""
    if value < 0:
        raise ValueError("varint values are unsigned")
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def decode_varint(buf, pos: int = 0):
    value = 0
    shift = 0
    while True:
        b = buf[pos]
        value |= (b & 0x7F) << shift
        pos += 1
        if not b & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise StreamError("varint too long")


def _find_runs(arr: np.ndarray):
    if arr.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.uint8)
    starts = np.flatnonzero(arr[1:] != arr[:-1]) + 1
    starts = np.concatenate(([0], starts))
    ends = np.concatenate((starts[1:], [arr.size]))
    return (ends - starts).astype(np.int64), arr[starts]


def rle_encode(data) -> bytes:
    arr = _as_u8(data)
    lens, chars = _find_runs(arr)
    if lens.size == 0:
        return b""
    return _k.pack_runs(lens, chars).tobytes()


def rle_decode(data) -> bytes:
    buf = _as_u8(data)
    lens, chars, used = _k.parse_runs(buf)
    if used != buf.size:
        raise StreamError("trailing partial run in encoded stream")
    return np.repeat(chars, lens).tobytes()


class RleEncoder:
    """Streaming run-length encoder; the trailing run is held until flush."""

    def __init__(self):
        self._char = -1
        self._len = 0

    def feed(self, arr: np.ndarray) -> np.ndarray:
        if arr.size == 0:
            return arr
        lens, chars = _find_runs(arr)
        if self._len:
            if chars[0] == self._char:
                lens[0] += self._len
            else:
                lens = np.concatenate(([self._len], lens))
                chars = np.concatenate(([self._char], chars)).astype(np.uint8)
        # hold the last run, it may continue in the next feed
        self._char = int(chars[-1])
        self._len = int(lens[-1])
        if lens.size == 1:
            return np.empty(0, np.uint8)
        return _k.pack_runs(lens[:-1], chars[:-1])

    def flush(self) -> np.ndarray:
        if not self._len:
            return np.empty(0, np.uint8)
        out = _k.pack_runs(np.array([self._len], np.int64),
                           np.array([self._char], np.uint8))
        self._char = -1
        self._len = 0
        return out


class RleDecoder:
    """Streaming decoder: encoded bytes in, (lengths, chars) runs out."""

    def __init__(self):
        self._carry = np.empty(0, np.uint8)

    def feed(self, arr: np.ndarray):
        if self._carry.size:
            arr = np.concatenate((self._carry, arr))
        lens, chars, used = _k.parse_runs(arr)
        self._carry = arr[used:].copy()
        return lens, chars

    def finish(self):
        if self._carry.size:
            raise StreamError("encoded stream ends inside a run")


# ---------------------------------------------------------------------------
# accounting

class SpaceLedger:
    """Tracks passes, rounds, byte traffic, and live/peak temp bytes.

    Input and final output files are not temp space; everything a build
    parks on disk (or in memory buffers) between passes is.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.live_temp = 0
        self.peak_temp = 0
        self.bytes_read = 0
        self.bytes_written = 0
        self.passes = 0
        self.rounds = 0
        self._t0 = time.monotonic()

    def charge(self, delta: int) -> None:
        with self._lock:
            self.live_temp += int(delta)
            if self.live_temp < 0:
                raise RuntimeError("temp accounting went negative")
            if self.live_temp > self.peak_temp:
                self.peak_temp = self.live_temp

    def count_read(self, n: int) -> None:
        with self._lock:
            self.bytes_read += int(n)

    def count_written(self, n: int) -> None:
        with self._lock:
            self.bytes_written += int(n)

    def count_pass(self, k: int = 1) -> None:
        with self._lock:
            self.passes += k

    def count_round(self, k: int = 1) -> None:
        with self._lock:
            self.rounds += k

    def stats(self) -> dict:
        return {
            "passes": self.passes,
            "rounds": self.rounds,
            "bytes_read": self.bytes_read,
            "bytes_written": self.bytes_written,
            "peak_temp_bytes": self.peak_temp,
            "wall_ms": int((time.monotonic() - self._t0) * 1000),
        }


# ---------------------------------------------------------------------------
# workspaces

class _Handle:
    """Positioned read view of one stored stream."""

    def pread(self, off: int, size: int) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _FdHandle(_Handle):
    def __init__(self, fd):
        self._fd = fd

    def pread(self, off, size):
        return np.frombuffer(os.pread(self._fd, size, off), dtype=np.uint8)

    def close(self):
        os.close(self._fd)


class _BufHandle(_Handle):
    def __init__(self, buf):
        self._buf = buf

    def pread(self, off, size):
        return np.frombuffer(bytes(self._buf[off:off + size]), dtype=np.uint8)


class Workspace:
    """Named temp streams plus the ledger that audits them."""

    def __init__(self, ledger=None):
        self.ledger = ledger if ledger is not None else SpaceLedger()
        self._seq = 0

    def unique(self, tag: str) -> str:
        self._seq += 1
        return "%s.%06d" % (tag, self._seq)

    # -- subclass surface -------------------------------------------------
    def _create(self, name):
        raise NotImplementedError

    def _append(self, name, arr):
        raise NotImplementedError

    def _open(self, name) -> _Handle:
        raise NotImplementedError

    def size(self, name) -> int:
        raise NotImplementedError

    def exists(self, name) -> bool:
        raise NotImplementedError

    def delete(self, name) -> None:
        raise NotImplementedError

    def rename(self, old, new) -> None:
        raise NotImplementedError

    def names(self):
        raise NotImplementedError

    # -- shared API -------------------------------------------------------
    def open_read(self, name) -> _Handle:
        return self._open(name)

    def append(self, name, data) -> None:
        arr = _as_u8(data)
        if not self.exists(name):
            self._create(name)
        if arr.size:
            self._append(name, arr)
            self.ledger.charge(arr.size)
            self.ledger.count_written(arr.size)

    def write_file(self, name, data) -> None:
        if self.exists(name):
            raise StreamError("refusing to overwrite temp stream %r" % name)
        self.append(name, data)
        if not self.exists(name):
            self._create(name)

    def read_range(self, name, off, size) -> np.ndarray:
        h = self._open(name)
        try:
            arr = h.pread(off, size)
        finally:
            h.close()
        self.ledger.count_read(arr.size)
        return arr

    def read_file(self, name) -> np.ndarray:
        return self.read_range(name, 0, self.size(name))

    def writer(self, name, codec=IDENTITY, chunk=IO_CHUNK) -> "StreamWriter":
        if codec not in CODECS:
            raise StreamError("unknown codec %r" % codec)
        if self.exists(name):
            raise StreamError("stream %r already exists" % name)
        self._create(name)
        return StreamWriter(lambda a: self._counted_append(name, a), codec, chunk)

    def _counted_append(self, name, arr):
        if arr.size:
            self._append(name, arr)
            self.ledger.charge(arr.size)
            self.ledger.count_written(arr.size)

    def reader(self, name, codec=IDENTITY, consume=False, chunk=IO_CHUNK) -> "RangeReader":
        if codec not in CODECS:
            raise StreamError("unknown codec %r" % codec)
        on_done = (lambda: self.delete(name)) if consume else None
        return RangeReader(self._open(name), 0, self.size(name), codec,
                           self.ledger, chunk=chunk, on_done=on_done)

    def cleanup(self) -> None:
        for name in list(self.names()):
            self.delete(name)


class DiskWorkspace(Workspace):
    def __init__(self, root, ledger=None):
        super().__init__(ledger)
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._sizes = {}

    def path(self, name):
        return os.path.join(self.root, name)

    def _create(self, name):
        with open(self.path(name), "wb"):
            pass
        self._sizes[name] = 0

    def _append(self, name, arr):
        with open(self.path(name), "ab") as fh:
            fh.write(arr.tobytes())
        self._sizes[name] += arr.size

    def _open(self, name):
        return _FdHandle(os.open(self.path(name), os.O_RDONLY))

    def size(self, name):
        return self._sizes[name]

    def exists(self, name):
        return name in self._sizes

    def delete(self, name):
        self.ledger.charge(-self._sizes.pop(name))
        os.unlink(self.path(name))

    def rename(self, old, new):
        if new in self._sizes:
            raise StreamError("stream %r already exists" % new)
        os.rename(self.path(old), self.path(new))
        self._sizes[new] = self._sizes.pop(old)

    def names(self):
        return list(self._sizes)

    def destroy(self) -> None:
        self.cleanup()
        try:
            os.rmdir(self.root)
        except OSError:
            pass


class MemoryWorkspace(Workspace):
    def __init__(self, ledger=None):
        super().__init__(ledger)
        self._bufs = {}

    def _create(self, name):
        self._bufs[name] = bytearray()

    def _append(self, name, arr):
        self._bufs[name] += arr.tobytes()

    def _open(self, name):
        return _BufHandle(self._bufs[name])

    def size(self, name):
        return len(self._bufs[name])

    def exists(self, name):
        return name in self._bufs

    def delete(self, name):
        self.ledger.charge(-len(self._bufs.pop(name)))

    def rename(self, old, new):
        if new in self._bufs:
            raise StreamError("stream %r already exists" % new)
        self._bufs[new] = self._bufs.pop(old)

    def names(self):
        return list(self._bufs)

    def destroy(self) -> None:
        self.cleanup()


# ---------------------------------------------------------------------------
# forward readers and writers

class StreamWriter:
    """Buffered sequential writer with optional run-length coding."""

    def __init__(self, sink, codec=IDENTITY, chunk=IO_CHUNK):
        self._sink = sink
        self._enc = RleEncoder() if codec == RLE else None
        self._chunk = chunk
        self._parts = []
        self._buffered = 0
        self.payload_bytes = 0
        self.stored_bytes = 0
        self._closed = False

    def write(self, data) -> None:
        arr = _as_u8(data)
        if arr.size == 0:
            return
        self.payload_bytes += arr.size
        self._parts.append(arr)
        self._buffered += arr.size
        if self._buffered >= self._chunk:
            self._flush()

    def _flush(self):
        if not self._parts:
            return
        arr = self._parts[0] if len(self._parts) == 1 else np.concatenate(self._parts)
        self._parts = []
        self._buffered = 0
        if self._enc is not None:
            arr = self._enc.feed(arr)
        if arr.size:
            self._sink(arr)
            self.stored_bytes += arr.size

    def close(self) -> None:
        if self._closed:
            return
        self._flush()
        if self._enc is not None:
            tail = self._enc.flush()
            if tail.size:
                self._sink(tail)
                self.stored_bytes += tail.size
        self._closed = True


class RangeReader:
    """Sequential decoded reads over one byte range of a stored stream."""

    def __init__(self, handle, start, stop, codec=IDENTITY, ledger=None,
                 chunk=IO_CHUNK, on_done=None):
        if codec not in CODECS:
            raise StreamError("unknown codec %r" % codec)
        self._h = handle
        self._pos = start
        self._stop = stop
        self._codec = codec
        self._ledger = ledger
        self._chunk = chunk
        self._on_done = on_done
        self._dec = RleDecoder() if codec == RLE else None
        # identity buffer
        self._buf = np.empty(0, np.uint8)
        self._boff = 0
        # rle run buffer
        self._chars = np.empty(0, np.uint8)
        self._cum = np.empty(0, np.int64)
        self._served = 0
        self._closed = False

    def _pull(self) -> np.ndarray:
        take = min(self._chunk, self._stop - self._pos)
        if take <= 0:
            return np.empty(0, np.uint8)
        arr = self._h.pread(self._pos, take)
        if arr.size != take:
            raise StreamError("short read from stored stream")
        self._pos += take
        if self._ledger is not None:
            self._ledger.count_read(take)
        return arr

    def _serve_runs(self, want, parts):
        total = self._cum[-1] if self._cum.size else 0
        take = min(want, total - self._served)
        if take <= 0:
            return 0
        s0 = self._served
        s1 = s0 + take
        j0 = int(np.searchsorted(self._cum, s0, side="right"))
        j1 = int(np.searchsorted(self._cum, s1, side="left"))
        lens = np.diff(self._cum[j0 - 1:j1 + 1]) if j0 else \
            np.concatenate(([self._cum[0]], np.diff(self._cum[:j1 + 1])))
        lens = lens.copy()
        lens[0] -= s0 - (self._cum[j0 - 1] if j0 else 0)
        lens[-1] -= self._cum[j1] - s1
        parts.append(np.repeat(self._chars[j0:j1 + 1], lens))
        self._served = s1
        return take

    def read(self, n: int) -> np.ndarray:
        """Up to n decoded bytes; shorter only at end of range."""
        parts = []
        got = 0
        while got < n:
            if self._codec == IDENTITY:
                avail = self._buf.size - self._boff
                if avail == 0:
                    self._buf = self._pull()
                    self._boff = 0
                    if self._buf.size == 0:
                        break
                    continue
                take = min(n - got, avail)
                parts.append(self._buf[self._boff:self._boff + take])
                self._boff += take
                got += take
            else:
                served = self._serve_runs(n - got, parts)
                if served == 0:
                    raw = self._pull()
                    if raw.size == 0:
                        self._dec.finish()
                        break
                    lens, chars = self._dec.feed(raw)
                    self._chars = chars
                    self._cum = np.cumsum(lens)
                    self._served = 0
                    continue
                got += served
        if got == 0 and n > 0:
            self._finish()
        out = parts[0] if len(parts) == 1 else (
            np.concatenate(parts) if parts else np.empty(0, np.uint8))
        return out

    def read_all(self) -> np.ndarray:
        parts = []
        while True:
            arr = self.read(self._chunk)
            if arr.size == 0:
                break
            parts.append(arr)
        return np.concatenate(parts) if parts else np.empty(0, np.uint8)

    def _finish(self):
        if self._closed:
            return
        self._closed = True
        self._h.close()
        if self._on_done is not None:
            self._on_done()
            self._on_done = None

    def close(self) -> None:
        self._finish()


# ---------------------------------------------------------------------------
# inputs and final outputs

class FileInput:
    """Read-only view of the input text on disk."""

    def __init__(self, path, ledger):
        self._fd = os.open(path, os.O_RDONLY)
        self.n = os.fstat(self._fd).st_size
        self._ledger = ledger

    def read_slice(self, start, size) -> np.ndarray:
        if size <= 0:
            return np.empty(0, np.uint8)
        arr = np.frombuffer(os.pread(self._fd, size, start), dtype=np.uint8)
        if arr.size != size:
            raise StreamError("short read from input")
        self._ledger.count_read(size)
        return arr

    def backward_chunks(self, start, stop, chunk=IO_CHUNK):
        """Reversed chunks covering [start, stop), walking from the end."""
        hi = stop
        while hi > start:
            lo = max(start, hi - chunk)
            yield self.read_slice(lo, hi - lo)[::-1]
            hi = lo

    def close(self):
        os.close(self._fd)


class BytesInput:
    """Same surface as FileInput for in-memory text."""

    def __init__(self, data, ledger):
        self._arr = _as_u8(data)
        self.n = self._arr.size
        self._ledger = ledger

    def read_slice(self, start, size):
        if size <= 0:
            return np.empty(0, np.uint8)
        if start + size > self.n:
            raise StreamError("short read from input")
        self._ledger.count_read(size)
        return self._arr[start:start + size]

    def backward_chunks(self, start, stop, chunk=IO_CHUNK):
        hi = stop
        while hi > start:
            lo = max(start, hi - chunk)
            yield self.read_slice(lo, hi - lo)[::-1]
            hi = lo

    def close(self):
        pass


class OutputFile:
    """The final product file. Traffic is counted but it is never temp."""

    def __init__(self, path, ledger):
        self._fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
        os.ftruncate(self._fd, 0)
        self._ledger = ledger
        self._cursor = 0

    def pwrite(self, off, data) -> None:
        arr = _as_u8(data)
        if arr.size == 0:
            return
        os.pwrite(self._fd, arr.tobytes(), off)
        self._ledger.count_written(arr.size)

    def pread(self, off, size) -> np.ndarray:
        arr = np.frombuffer(os.pread(self._fd, size, off), dtype=np.uint8)
        if arr.size != size:
            raise StreamError("short read from output file")
        self._ledger.count_read(size)
        return arr

    def append(self, data) -> None:
        arr = _as_u8(data)
        self.pwrite(self._cursor, arr)
        self._cursor += arr.size

    def seek(self, off) -> None:
        self._cursor = off

    def tell(self) -> int:
        return self._cursor

    def truncate(self, size) -> None:
        os.ftruncate(self._fd, size)

    def size(self) -> int:
        return os.fstat(self._fd).st_size

    def close(self):
        os.close(self._fd)


# ---------------------------------------------------------------------------
# chunked bit streams (deleted as they are consumed)

class BitChunkWriter:
    """Bit stream split into fixed page-multiple files inside a workspace."""

    def __init__(self, ws, prefix, pages=32):
        self._ws = ws
        self._prefix = prefix
        self._cap = pages * PAGE_SIZE * 8
        self._parts = []
        self._buffered = 0
        self._nfile = 0
        self.total_bits = 0

    def _name(self, k):
        return "%s.%06d" % (self._prefix, k)

    def append(self, bits: np.ndarray) -> None:
        if bits.size == 0:
            return
        self.total_bits += bits.size
        self._parts.append(bits)
        self._buffered += bits.size
        while self._buffered >= self._cap:
            whole = np.concatenate(self._parts)
            chunk, rest = whole[:self._cap], whole[self._cap:]
            self._ws.write_file(self._name(self._nfile),
                                np.packbits(chunk, bitorder="little"))
            self._nfile += 1
            self._parts = [rest] if rest.size else []
            self._buffered = rest.size

    def finish(self) -> int:
        if self._buffered:
            whole = np.concatenate(self._parts)
            self._ws.write_file(self._name(self._nfile),
                                np.packbits(whole, bitorder="little"))
            self._nfile += 1
            self._parts = []
            self._buffered = 0
        return self.total_bits


class BitChunkReader:
    """Reads a BitChunkWriter stream in order, deleting consumed files."""

    def __init__(self, ws, prefix, total_bits, pages=32, consume=True):
        self._ws = ws
        self._prefix = prefix
        self._cap = pages * PAGE_SIZE * 8
        self._total = total_bits
        self._consume = consume
        self._kfile = 0
        self._bits = np.empty(0, np.uint8)
        self._off = 0
        self._taken = 0

    def _name(self, k):
        return "%s.%06d" % (self._prefix, k)

    def _load(self):
        name = self._name(self._kfile)
        packed = self._ws.read_file(name)
        if self._consume:
            self._ws.delete(name)
        lo = self._kfile * self._cap
        valid = min(self._cap, self._total - lo)
        self._bits = np.unpackbits(packed, bitorder="little")[:valid]
        self._off = 0
        self._kfile += 1

    def next_bits(self, count: int) -> np.ndarray:
        if self._taken + count > self._total:
            raise StreamError("bit stream overrun")
        parts = []
        got = 0
        while got < count:
            if self._off == self._bits.size:
                self._load()
            take = min(count - got, self._bits.size - self._off)
            parts.append(self._bits[self._off:self._off + take])
            self._off += take
            got += take
        self._taken += count
        return parts[0] if len(parts) == 1 else (
            np.concatenate(parts) if parts else np.empty(0, np.uint8))


# ---------------------------------------------------------------------------
# plain-path stream facade

class _ForwardStream:
    def __init__(self, path, codec):
        fd = os.open(path, os.O_RDONLY)
        size = os.fstat(fd).st_size
        self._rd = RangeReader(_FdHandle(fd), 0, size, codec)

    def read(self, n):
        return self._rd.read(n).tobytes()

    def read_all(self):
        return self._rd.read_all().tobytes()

    def close(self):
        self._rd.close()


class _BackwardStream:
    def __init__(self, path):
        self._fd = os.open(path, os.O_RDONLY)
        self._pos = os.fstat(self._fd).st_size

    def read(self, n):
        take = min(n, self._pos)
        if take <= 0:
            return b""
        data = os.pread(self._fd, take, self._pos - take)
        self._pos -= take
        return data[::-1]

    def read_all(self):
        return self.read(self._pos)

    def close(self):
        os.close(self._fd)


def open_stream(path, direction="forward", codec=IDENTITY):
    """Sequential view of a plain file, forward or backward."""
    if codec not in CODECS:
        raise StreamError("unknown codec %r" % codec)
    if direction == "forward":
        return _ForwardStream(path, codec)
    if direction == "backward":
        if codec != IDENTITY:
            raise StreamError("backward streams must be plain bytes")
        return _BackwardStream(path)
    raise StreamError("direction must be forward or backward")
