"""Reference oracle: frozen examples, naive cross-checks, identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwtscan.oracle import OracleError, oracle_all, oracle_gap


def naive_all(text):
    """Throwaway quadratic suffix sort used to cross-check the oracle."""
    t = list(text) + [-1]
    size = len(t)
    order = sorted(range(1, size + 1), key=lambda k: tuple(t[k - 1:]))
    sa = np.array(order, np.int64)
    rank = np.empty(size + 1, np.int64)
    rank[sa] = np.arange(1, size + 1)
    cells = np.array([t[(k - 2) % size] for k in order], np.int16)
    psi = np.array([rank[(k % size) + 1] for k in order], np.int64)
    return sa, rank[1:], cells, psi


def test_frozen_three_letter_example():
    ref = oracle_all(b"aba")
    assert ref.n == 3
    assert list(ref.sa) == [4, 3, 1, 2]
    assert list(ref.psi) == [3, 1, 4, 2]
    assert ref.primary_row == 3
    assert ref.primary_index0 == 2
    assert list(ref.cells) == [97, 98, -1, 97]
    assert ref.payload_bytes().tobytes() == b"aba"
    assert list(ref.sa_file_values()) == [3, 2, 0, 1]
    assert list(ref.psi_file_values()) == [2, 0, 3, 1]


def test_empty_and_single_letter():
    ref = oracle_all(b"")
    assert ref.n == 0
    assert list(ref.sa) == [1]
    assert list(ref.psi) == [1]
    assert ref.primary_row == 1
    assert ref.payload_bytes().size == 0

    ref = oracle_all(b"a")
    assert list(ref.sa) == [2, 1]
    assert list(ref.cells) == [97, -1]
    assert ref.primary_row == 2
    assert ref.payload_bytes().tobytes() == b"a"


def test_sampled_positions_frozen():
    ref = oracle_all(b"baa")
    assert [tuple(p) for p in ref.pos_pairs(2)] == [(0, 3), (2, 1)]
    # step equal to the padded length keeps exactly the terminator slot
    assert [tuple(p) for p in ref.pos_pairs(4)] == [(0, 3)]
    assert ref.pos_pairs(5).size == 0
    assert [tuple(p) for p in ref.pos_pairs(1)] == [
        (0, 3), (1, 2), (2, 1), (3, 0)]
    with pytest.raises(ValueError):
        ref.pos_pairs(0)


def test_gap_frozen_examples():
    old = np.array([97, -1], np.int16)
    blk = np.frombuffer(b"ba", np.uint8).astype(np.int16)
    assert list(oracle_gap(old, blk)) == [2, 0, 0]

    blk = np.frombuffer(b"aa", np.uint8).astype(np.int16)
    assert list(oracle_gap(old, blk)) == [2, 0, 0]

    # first pass: nothing merged in yet, gap is all zero
    empty = np.empty(0, np.int16)
    one = np.array([97], np.int16)
    assert list(oracle_gap(empty, one)) == [0, 0]

    with pytest.raises(ValueError):
        oracle_gap(old, empty)


def test_gap_mass_matches_old_length(rng):
    for _ in range(40):
        n = int(rng.integers(1, 40))
        cut = int(rng.integers(1, n + 1))
        t = np.concatenate([
            rng.integers(97, 100, n).astype(np.int16),
            np.array([-1], np.int16)])
        blk, old = t[:cut], t[cut:]
        gap = oracle_gap(old, blk)
        assert gap.size == cut + 1
        assert gap.sum() == old.size


@given(st.binary(max_size=150))
@settings(max_examples=200)
def test_matches_naive_suffix_sort(text):
    ref = oracle_all(text)
    sa, rank, cells, psi = naive_all(text)
    assert np.array_equal(ref.sa, sa)
    assert np.array_equal(ref.rank_of_pos[1:], rank)
    assert np.array_equal(ref.cells, cells)
    assert np.array_equal(ref.psi, psi)


@given(st.binary(max_size=300))
@settings(max_examples=150)
def test_internal_identities(text):
    ref = oracle_all(text)
    size = ref.n + 1
    sa = ref.sa
    # last column cell = character one left of the suffix, cyclically
    t = np.concatenate([
        np.frombuffer(text, np.uint8).astype(np.int16),
        np.array([-1], np.int16)])
    assert np.array_equal(ref.cells, t[(sa - 2) % size])
    # successor array walks one text position to the right
    wrapped = np.where(sa == size, 1, sa + 1)
    assert np.array_equal(sa[ref.psi - 1], wrapped)
    # rank table inverts the suffix array (slot 0 is a placeholder)
    assert np.array_equal(sa[ref.rank_of_pos[1:] - 1], np.arange(1, size + 1))
    # exactly one hole, at the primary row
    holes = np.flatnonzero(ref.cells < 0)
    assert list(holes) == [ref.primary_row - 1]


def test_doubling_agrees_with_tiny_path(rng):
    # lengths straddling the internal cutover between the two sort routes
    for n in (60, 63, 64, 65, 70, 130):
        text = random_text_local(rng, n)
        ref = oracle_all(text)
        sa, _, _, _ = naive_all(text)
        assert np.array_equal(ref.sa, sa)


def random_text_local(rng, n):
    return rng.integers(97, 101, n, dtype=np.uint8).tobytes()


def test_guard_rejects_oversize():
    with pytest.raises(OracleError):
        oracle_all(b"a" * ((1 << 20) + 1))
