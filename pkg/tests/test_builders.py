"""Builders: every product against the oracle, layouts, config guards."""

import os

import numpy as np
import pytest

from bwtscan.builders import (
    BuildConfig,
    UsageError,
    build_bwt,
    build_posd,
    build_psi,
    build_sa,
)
from bwtscan.formats import (
    parse_bwt_header,
    read_bwt_file,
    read_posd_file,
    read_psi_file,
    read_sa_file,
)
from bwtscan.oracle import oracle_all

from conftest import random_text

STATS_KEYS = {"passes", "rounds", "bytes_read", "bytes_written",
              "peak_temp_bytes", "wall_ms"}


def cfg_internal(**kw):
    kw.setdefault("mode", "internal")
    return BuildConfig(**kw)


def grid_texts(rng):
    yield b""
    yield b"a"
    yield b"ab"
    yield b"aba"
    yield b"baa"
    yield b"mississippi"
    yield b"abracadabra" * 3
    yield b"z" * 50
    yield b"ab" * 32
    yield random_text(rng, 40, 1)
    yield random_text(rng, 64, 2)
    yield random_text(rng, 100, 26)
    yield random_text(rng, 128, 255)


def check_all_products(tmp_path, text, cfg, ref, d=2):
    out = str(tmp_path / "o.bin")
    build_bwt(text, out, cfg)
    n, primary, payload = read_bwt_file(out)
    assert n == ref.n
    assert primary == ref.primary_index0
    assert payload == ref.payload_bytes().tobytes()

    build_sa(text, out, cfg)
    assert np.array_equal(read_sa_file(out), ref.sa_file_values())

    build_psi(text, out, cfg)
    assert np.array_equal(read_psi_file(out), ref.psi)

    build_posd(text, out, d, cfg)
    got_d, pairs = read_posd_file(out)
    assert got_d == d
    assert np.array_equal(pairs, ref.pos_pairs(d))


def test_frozen_three_letter_products(tmp_path):
    ref = oracle_all(b"aba")
    out = str(tmp_path / "o.bin")
    build_bwt(b"aba", out, cfg_internal())
    assert read_bwt_file(out) == (3, 2, b"aba")
    build_sa(b"aba", out, cfg_internal())
    assert list(read_sa_file(out)) == [3, 2, 0, 1]
    build_psi(b"aba", out, cfg_internal())
    assert list(read_psi_file(out)) == [3, 1, 4, 2]
    build_posd(b"baa", out, 2, cfg_internal())
    d, pairs = read_posd_file(out)
    assert d == 2
    assert [tuple(p) for p in pairs] == [(0, 3), (2, 1)]
    assert ref.primary_row == 3


def test_empty_input_products(tmp_path):
    out = str(tmp_path / "o.bin")
    build_bwt(b"", out, cfg_internal())
    assert read_bwt_file(out) == (0, 0, b"")
    build_sa(b"", out, cfg_internal())
    assert list(read_sa_file(out)) == [0]
    build_psi(b"", out, cfg_internal())
    assert list(read_psi_file(out)) == [1]
    build_posd(b"", out, 1, cfg_internal())
    d, pairs = read_posd_file(out)
    assert d == 1
    assert [tuple(p) for p in pairs] == [(0, 0)]


def test_grid_matches_oracle(tmp_path, rng):
    for text in grid_texts(rng):
        ref = oracle_all(text)
        for m in (1, 2, 3, 5, 16, 1024):
            check_all_products(
                tmp_path, text, cfg_internal(block_size=m), ref,
                d=int(rng.integers(1, 4)))


def test_outputs_independent_of_block_size(tmp_path, rng):
    text = random_text(rng, 90, 4)
    blobs = set()
    for m in (1, 3, 7, 64, 4096):
        out = str(tmp_path / ("m%d.bin" % m))
        build_bwt(text, out, cfg_internal(block_size=m))
        with open(out, "rb") as fh:
            blobs.add(fh.read())
    assert len(blobs) == 1


def test_layouts_produce_identical_bytes(tmp_path, rng):
    text = random_text(rng, 200, 4)
    a = str(tmp_path / "two.bin")
    b = str(tmp_path / "inp.bin")
    build_bwt(text, a, BuildConfig(block_size=32, layout="two-file"))
    build_bwt(text, b, BuildConfig(block_size=32, layout="in-place"))
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_rle_codec_roundtrips(tmp_path):
    text = b"aaaaabbbbbcccccaaaaa" * 20
    ref = oracle_all(text)
    out = str(tmp_path / "o.bin")
    build_bwt(text, out, cfg_internal(codec="rle", block_size=64))
    with open(out, "rb") as fh:
        _, _, codec = parse_bwt_header(fh.read(24))
    assert codec == "rle"
    assert read_bwt_file(out) == (
        ref.n, ref.primary_index0, ref.payload_bytes().tobytes())


def test_external_disk_build_matches(tmp_path, rng):
    text = random_text(rng, 300, 26)
    src = tmp_path / "in.bin"
    src.write_bytes(text)
    ref = oracle_all(text)
    cfg = BuildConfig(block_size=48, workdir=str(tmp_path))
    check_all_products(tmp_path, str(src), cfg, ref, d=3)
    # no temp directories survive a finished build
    leftovers = [p for p in os.listdir(tmp_path) if p.startswith("bwtscan-")]
    assert leftovers == []


def test_stats_keys_and_pass_count(tmp_path, rng):
    out = str(tmp_path / "o.bin")
    for n, m in ((0, 1), (1, 1), (5, 2), (100, 7), (257, 64), (300, 1024)):
        text = random_text(rng, n, 4)
        stats = build_bwt(text, out, cfg_internal(block_size=m))
        assert set(stats) == STATS_KEYS
        assert stats["passes"] == -(-(n + 1) // m)


def test_derived_block_size_from_budget(tmp_path):
    # size 1001 needs 10-bit bookkeeping entries: budget 40 gives blocks
    # of 4 rows, hence 251 passes
    text = b"x" * 1000
    out = str(tmp_path / "o.bin")
    stats = build_bwt(text, out, cfg_internal(memory_budget=40))
    assert stats["passes"] == 251


def test_source_forms_agree(tmp_path, rng):
    text = random_text(rng, 150, 26)
    src = tmp_path / "in.bin"
    src.write_bytes(text)
    a = str(tmp_path / "a.bin")
    b = str(tmp_path / "b.bin")
    build_bwt(text, a, BuildConfig(block_size=20))
    build_bwt(str(src), b, BuildConfig(block_size=20))
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_internal_mode_budget_guard(tmp_path):
    src = tmp_path / "in.bin"
    src.write_bytes(b"y" * 4096)
    out = str(tmp_path / "o.bin")
    with pytest.raises(UsageError):
        build_bwt(str(src), out, cfg_internal(memory_budget=1024,
                                              block_size=16))


def test_config_validation(tmp_path):
    out = str(tmp_path / "o.bin")
    bad = [
        dict(codec="gzip"),
        dict(mode="distributed"),
        dict(layout="three-file"),
        dict(block_size=0),
        dict(memory_budget=0),
        dict(page_size=0),
    ]
    for kw in bad:
        with pytest.raises(UsageError):
            build_bwt(b"abc", out, BuildConfig(**kw))


def test_layout_and_codec_restrictions(tmp_path):
    out = str(tmp_path / "o.bin")
    with pytest.raises(UsageError):
        build_bwt(b"abc", out, BuildConfig(layout="in-place", codec="rle"))
    for builder in (build_sa, build_psi):
        with pytest.raises(UsageError):
            builder(b"abc", out, BuildConfig(layout="in-place"))
        with pytest.raises(UsageError):
            builder(b"abc", out, BuildConfig(codec="rle"))
    with pytest.raises(UsageError):
        build_posd(b"abc", out, 2, BuildConfig(layout="in-place"))
    with pytest.raises(UsageError):
        build_posd(b"abc", out, 2, BuildConfig(codec="rle"))
    with pytest.raises(UsageError):
        build_posd(b"abc", out, 0, BuildConfig())


def test_posd_step_domain(tmp_path, rng):
    text = random_text(rng, 30, 4)
    ref = oracle_all(text)
    out = str(tmp_path / "o.bin")
    # steps at and past the padded length: one pair, then none
    for d in (31, 32, 100):
        build_posd(text, out, d, cfg_internal())
        got_d, pairs = read_posd_file(out)
        assert got_d == d
        assert np.array_equal(pairs, ref.pos_pairs(d))
    assert read_posd_file(out)[1].shape[0] == 0
