"""On-disk container formats for the four index products.

Every integer on disk is little-endian and every index is 0-based; the
in-memory engine is 1-based throughout, so writers subtract one and
readers add it back.

transform container   "BWTD" magic, u8 version=1, u8 codec (0 raw, 1
                      run-length), u16 reserved, u64 n, u64 primary row,
                      then the n stored column bytes under the codec.
suffix positions      "SA_1" magic then n+1 u64 text positions.
successor ranks       "PSI1" magic, first value as u64, then zigzag
                      varint deltas between consecutive values.
sampled positions     "POSD" magic, u64 step, then (rank, position) u64
                      pairs sorted by rank.
"""

from __future__ import annotations

import struct

import numpy as np

from . import _kernels as _k
from .streams import CODECS, IDENTITY, RLE, StreamError, rle_decode

BWT_MAGIC = b"BWTD"
SA_MAGIC = b"SA_1"
PSI_MAGIC = b"PSI1"
POS_MAGIC = b"POSD"

BWT_HEADER = struct.Struct("<4sBBHQQ")
BWT_HEADER_SIZE = BWT_HEADER.size


class FormatError(ValueError):
    """Raised for malformed container files."""


def bwt_header_bytes(n: int, primary_index0: int, codec: str) -> bytes:
    if codec not in CODECS:
        raise StreamError("unknown codec %r" % codec)
    code = 0 if codec == IDENTITY else 1
    return BWT_HEADER.pack(BWT_MAGIC, 1, code, 0, n, primary_index0)


def parse_bwt_header(raw: bytes):
    """-> (n, primary_index0, codec)."""
    if len(raw) < BWT_HEADER_SIZE:
        raise FormatError("transform file truncated")
    magic, version, code, _, n, primary = BWT_HEADER.unpack(raw[:BWT_HEADER_SIZE])
    if magic != BWT_MAGIC:
        raise FormatError("bad magic in transform file")
    if version != 1:
        raise FormatError("unsupported transform file version %d" % version)
    if code not in (0, 1):
        raise FormatError("unknown codec byte %d" % code)
    if primary > n:
        raise FormatError("primary row out of range")
    return n, primary, IDENTITY if code == 0 else RLE


def read_bwt_file(path: str):
    """Load a whole transform file -> (n, primary_index0, payload bytes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    n, primary, codec = parse_bwt_header(raw)
    body = raw[BWT_HEADER_SIZE:]
    payload = bytes(body) if codec == IDENTITY else bytes(rle_decode(body))
    if len(payload) != n:
        raise FormatError("payload length %d does not match n=%d" % (len(payload), n))
    return n, primary, payload


def write_sa_magic(out) -> None:
    out.append(np.frombuffer(SA_MAGIC, dtype=np.uint8))


def sa_rows_bytes(values1: np.ndarray) -> np.ndarray:
    # values are 1-based positions in memory, 0-based on disk
    vals = np.asarray(values1, dtype=np.int64) - 1
    return np.frombuffer((vals.astype("<u8")).tobytes(), dtype=np.uint8)


def read_sa_file(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SA_MAGIC:
        raise FormatError("bad magic in suffix position file")
    body = raw[4:]
    if len(body) % 8:
        raise FormatError("suffix position file truncated")
    return np.frombuffer(body, dtype="<u8").astype(np.int64)


class PsiDeltaWriter:
    """Streams 1-based successor values out as first-value + delta codes."""

    def __init__(self, out):
        self._out = out
        self._prev = None

    def feed(self, values1: np.ndarray) -> None:
        vals = np.asarray(values1, dtype=np.int64) - 1
        if vals.size == 0:
            return
        if self._prev is None:
            self._out.append(
                np.frombuffer(PSI_MAGIC + struct.pack("<Q", int(vals[0])), dtype=np.uint8)
            )
            deltas = np.diff(vals)
        else:
            deltas = np.diff(np.concatenate([[self._prev], vals]))
        if deltas.size:
            self._out.append(_k.zigzag_pack(np.ascontiguousarray(deltas)))
        self._prev = int(vals[-1])

    def close(self) -> None:
        if self._prev is None:
            raise FormatError("successor file needs at least one value")


def read_psi_file(path: str) -> np.ndarray:
    """-> 1-based successor values."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != PSI_MAGIC or len(raw) < 12:
        raise FormatError("bad magic in successor file")
    first = struct.unpack("<Q", raw[4:12])[0]
    deltas, used = _k.zigzag_unpack(np.frombuffer(raw[12:], dtype=np.uint8))
    if used != len(raw) - 12:
        raise FormatError("trailing garbage in successor file")
    vals = np.concatenate([[first], deltas]).astype(np.int64)
    return np.cumsum(vals) + 1


def posd_header_bytes(d: int) -> np.ndarray:
    return np.frombuffer(POS_MAGIC + struct.pack("<Q", d), dtype=np.uint8)


def posd_pairs_bytes(pairs1: np.ndarray) -> np.ndarray:
    """(k, 2) 1-based (rank, position) pairs -> flat little-endian bytes."""
    pairs = np.asarray(pairs1, dtype=np.int64).reshape(-1, 2) - 1
    return np.frombuffer(pairs.astype("<u8").tobytes(), dtype=np.uint8)


def read_posd_file(path: str):
    """-> (d, (k, 2) array of 0-based (rank, position) pairs)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != POS_MAGIC or len(raw) < 12:
        raise FormatError("bad magic in sampled position file")
    d = struct.unpack("<Q", raw[4:12])[0]
    body = raw[12:]
    if len(body) % 16:
        raise FormatError("sampled position file truncated")
    pairs = np.frombuffer(body, dtype="<u8").astype(np.int64).reshape(-1, 2)
    return int(d), pairs
