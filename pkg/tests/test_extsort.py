"""External record sort: correctness, stability, budget handling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwtscan.extsort import external_sort
from bwtscan.streams import MemoryWorkspace, StreamError


def sort_via(ws_data, *, record_size, key_offset, key_width, mem_budget,
             delete_input=True):
    ws = MemoryWorkspace()
    ws.write_file("in", ws_data)
    external_sort(ws, "in", "out", record_size=record_size,
                  key_offset=key_offset, key_width=key_width,
                  mem_budget=mem_budget, delete_input=delete_input)
    out = ws.read_file("out").tobytes()
    return ws, out


def reference_sort(data, record_size, key_offset, key_width):
    recs = [data[i:i + record_size] for i in range(0, len(data), record_size)]
    keyed = [(int.from_bytes(r[key_offset:key_offset + key_width], "little"), r)
             for r in recs]
    keyed.sort(key=lambda kv: kv[0])
    return b"".join(r for _, r in keyed)


def test_empty_input():
    ws, out = sort_via(b"", record_size=8, key_offset=0, key_width=4,
                       mem_budget=1024)
    assert out == b""
    assert ws.exists("out")
    assert not ws.exists("in")


def test_sorted_input_unchanged(rng):
    keys = np.sort(rng.integers(0, 1 << 30, 1000).astype(np.uint64))
    recs = np.zeros((1000, 16), np.uint8)
    recs[:, :8] = keys.view(np.uint8).reshape(1000, 8)
    recs[:, 8:] = rng.integers(0, 256, (1000, 8))
    data = recs.ravel().tobytes()
    for budget in (16 * 1024 * 1024, 256):
        _, out = sort_via(data, record_size=16, key_offset=0, key_width=8,
                          mem_budget=budget)
        assert out == data


def test_large_random_tiny_budget(rng):
    n = 100_000
    recs = np.zeros((n, 8), np.uint8)
    keys = rng.integers(0, 1 << 16, n).astype(np.uint16)
    recs[:, 4:6] = keys.view(np.uint8).reshape(n, 2)
    seq = np.arange(n, dtype=np.uint32)
    recs[:, 0:3] = seq.view(np.uint8).reshape(n, 4)[:, :3]
    data = recs.ravel().tobytes()
    _, out = sort_via(data, record_size=8, key_offset=4, key_width=2,
                      mem_budget=4096)
    arr = np.frombuffer(out, np.uint8).reshape(n, 8)
    got_keys = arr[:, 4:6].copy().view(np.uint16).ravel()
    assert np.array_equal(got_keys, np.sort(keys))
    # stability: within equal keys the 3-byte sequence stamp stays ascending
    stamps = np.zeros((n, 4), np.uint8)
    stamps[:, :3] = arr[:, 0:3]
    stamps = stamps.view(np.uint32).ravel().astype(np.int64)
    brk = np.flatnonzero(np.diff(got_keys.astype(np.int64)) == 0)
    assert np.all(stamps[brk + 1] > stamps[brk])


def test_matches_reference_at_many_budgets(rng):
    n = 3000
    data = rng.integers(0, 256, n * 12, dtype=np.uint8).tobytes()
    want = reference_sort(data, 12, 5, 3)
    for budget in (24, 100, 4096, 1 << 20):
        _, out = sort_via(data, record_size=12, key_offset=5, key_width=3,
                          mem_budget=budget)
        assert out == want


def test_temp_space_released():
    rng = np.random.default_rng(7)
    data = rng.integers(0, 256, 4096, dtype=np.uint8).tobytes()
    ws, out = sort_via(data, record_size=16, key_offset=0, key_width=2,
                       mem_budget=64)
    assert sorted(ws.names()) == ["out"]
    assert ws.ledger.live_temp == len(data)


def test_delete_input_flag():
    ws = MemoryWorkspace()
    ws.write_file("in", bytes(range(32)))
    external_sort(ws, "in", "out", record_size=8, key_offset=0, key_width=1,
                  mem_budget=1024, delete_input=False)
    assert ws.exists("in")


def test_usage_errors():
    ws = MemoryWorkspace()
    ws.write_file("in", bytes(16))
    for kw in (0, 9):
        with pytest.raises(StreamError):
            external_sort(ws, "in", "out", record_size=8, key_offset=0,
                          key_width=kw, mem_budget=1024)
    with pytest.raises(StreamError):
        external_sort(ws, "in", "out", record_size=8, key_offset=6,
                      key_width=4, mem_budget=1024)
    with pytest.raises(StreamError):
        external_sort(ws, "in", "out", record_size=8, key_offset=0,
                      key_width=4, mem_budget=15)
    ws.write_file("odd", bytes(9))
    with pytest.raises(StreamError):
        external_sort(ws, "odd", "out", record_size=8, key_offset=0,
                      key_width=4, mem_budget=1024)


@given(
    st.lists(st.tuples(st.integers(0, 3), st.integers(0, 255)), max_size=80),
    st.integers(min_value=8, max_value=48),
)
@settings(max_examples=60)
def test_stability_property(pairs, budget):
    # 4-byte records: 1-byte key then a 3-byte stamp of the input position
    recs = bytearray()
    for i, (k, payload) in enumerate(pairs):
        recs += bytes([k, payload]) + i.to_bytes(2, "little")
    want = reference_sort(bytes(recs), 4, 0, 1)
    _, out = sort_via(bytes(recs), record_size=4, key_offset=0, key_width=1,
                      mem_budget=budget)
    assert out == want
