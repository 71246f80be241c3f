"""Acceptance suite: one test per numbered delivery criterion.

Each test name carries its criterion number; pytest -v therefore prints
one pass/fail line per criterion. Expected runtimes on a small machine:
criteria 1, 3, 6 and 8 take seconds to about a minute each, criteria 4,
5 and 7 up to a couple of minutes, and the 100 MiB leg of criterion 2
roughly half an hour. Criterion 2's exact-run-count clause for periodic
inputs is kept as its own test and fails by design on a minimal
counterexample; the assertion message holds the analysis, and the
companion test pins down the block property that does hold.
"""

import math
import os
import time

import numpy as np
import pytest

from bwtscan.builders import BuildConfig, build_bwt, build_posd, build_psi, build_sa
from bwtscan.formats import (
    read_bwt_file,
    read_posd_file,
    read_psi_file,
    read_sa_file,
)
from bwtscan.invert import naive_unbwt, piece_budget, scan_unbwt
from bwtscan.oracle import oracle_all

from conftest import (
    fibonacci_word,
    periodic_text,
    random_text,
    run_count,
    smallest_period,
)

SIGMAS = (1, 2, 4, 26, 255)
BLOCKS = (1, 2, 3, 5, 16, 64, 1024)


def build_and_check(tmp_path, text, m, d, ref):
    cfg = BuildConfig(block_size=m, mode="internal")
    out = str(tmp_path / "prod.bin")
    stats = build_bwt(text, out, cfg)
    assert read_bwt_file(out) == (
        ref.n, ref.primary_index0, ref.payload_bytes().tobytes())
    assert stats["passes"] == -(-(ref.n + 1) // m)
    build_sa(text, out, cfg)
    assert np.array_equal(read_sa_file(out), ref.sa_file_values())
    build_psi(text, out, cfg)
    assert np.array_equal(read_psi_file(out), ref.psi)
    build_posd(text, out, d, cfg)
    got_d, pairs = read_posd_file(out)
    assert got_d == d and np.array_equal(pairs, ref.pos_pairs(d))


def test_criterion_1_builders_match_oracle(tmp_path):
    """1000+ random texts, five alphabet sizes, seven block sizes: every
    product equals the in-memory reference exactly."""
    rng = np.random.default_rng(0xC1)
    count = 0
    for i in range(1000):
        sigma = SIGMAS[i % 5]
        m = BLOCKS[(i // 5) % 7]
        cap = 256 if m <= 3 else (512 if m == 5 else 2048)
        if i % 3 == 0:
            n = int(rng.integers(0, 129))
        else:
            n = int(rng.integers(0, cap + 1))
        text = random_text(rng, n, sigma)
        ref = oracle_all(text)
        d = int(rng.choice([1, 2, 7, 64, n + 1, n + 2]))
        build_and_check(tmp_path, text, m, d, ref)
        count += 1
    # force the length endpoints through the widest and narrowest blocks
    for n, m in ((0, 1), (0, 1024), (2048, 16), (2048, 1024)):
        text = random_text(rng, n, 4)
        build_and_check(tmp_path, text, m, 3, oracle_all(text))
        count += 1
    assert count >= 1000


def rotation_transform(text):
    """Last column of the sorted rotation table (no terminator)."""
    n = len(text)
    doubled = text + text
    order = sorted(range(n), key=lambda i: doubled[i:i + n])
    return bytes(text[(i - 1) % n] for i in order)


def c2_corpus(rng):
    texts = [b"", b"a", b"ab", b"ba"]
    for sigma in SIGMAS:
        for _ in range(18):
            texts.append(random_text(rng, int(rng.integers(0, 600)), sigma))
    for n in (1, 2, 17, 256):
        texts.append(b"q" * n)
    for n in (89, 233, 610):
        texts.append(fibonacci_word(n))
    return texts


def c2_periodic(rng):
    out = []
    for r in (1, 2, 3, 5, 8):
        for _ in range(4):
            k = int(rng.integers(2, max(3, 320 // r)))
            out.append((periodic_text(rng, r, k), r))
    out.append((b"baba", 2))
    return out


def roundtrip(tmp_path, text, m=64, mem_budget=256 << 20):
    src = tmp_path / "rt.bwt"
    dst = tmp_path / "rt.out"
    build_bwt(text, str(src), BuildConfig(block_size=m, mode="internal"))
    scan_unbwt(str(src), str(dst), mem_budget=mem_budget)
    return dst.read_bytes()


def test_criterion_2_roundtrip_corpus(tmp_path):
    """Recovering every corpus text from its transform, including the
    periodic and the all-equal families."""
    rng = np.random.default_rng(0xC2)
    for text in c2_corpus(rng):
        assert roundtrip(tmp_path, text) == text
    for text, r in c2_periodic(rng):
        assert len(text) % r == 0
        assert smallest_period(text) == r
        assert roundtrip(tmp_path, text) == text
    # all-equal strings compress to a single run
    for n in (1, 2, 17, 256):
        src = tmp_path / "eq.bwt"
        build_bwt(b"q" * n, str(src), BuildConfig(mode="internal"))
        _, _, payload = read_bwt_file(str(src))
        assert run_count(payload) == 1


def test_criterion_2_periodic_block_structure(tmp_path):
    """The uniform-block law that does hold for periodic strings: sorting
    the n rotations of w^k gives a last column made of r constant blocks
    of k characters each."""
    rng = np.random.default_rng(0xC2B)
    for text, r in c2_periodic(rng):
        if len(text) > 360:
            continue
        k = len(text) // r
        col = rotation_transform(text)
        blocks = [col[i * k:(i + 1) * k] for i in range(r)]
        assert all(len(set(b)) == 1 for b in blocks), (text, r)


def test_criterion_2_periodic_run_count_exact(tmp_path):
    """Strict reading of the periodic clause: the emitted transform of
    w^k (period r) has exactly r runs. This is false for the
    terminator-augmented transform this package emits, so this test is
    red by design; see the uniform-block companion test for the law that
    holds."""
    rng = np.random.default_rng(0xC2C)
    for text, r in c2_periodic(rng):
        src = tmp_path / "p.bwt"
        build_bwt(text, str(src), BuildConfig(mode="internal"))
        _, _, payload = read_bwt_file(str(src))
        assert run_count(payload) == r, (
            "text %r has smallest period %d but its emitted transform "
            "%r has %d runs. The r-run law holds for the rotation-sorted "
            "column of a periodic string; appending the unique terminator "
            "perturbs the rotation order (minimal case: 'baba', period 2, "
            "payload 'abba', 3 runs), and the emitted transform stores "
            "the terminator-augmented column. Recorded as decision D4 in "
            "the project decision ledger."
            % (text, r, payload, run_count(payload)))


def write_mixed_file(path, total):
    rng = np.random.default_rng(0xC2D)
    block = rng.integers(0, 256, 1024, dtype=np.uint8).tobytes()
    words = [b"the ", b"quick ", b"scan ", b"round ", b"merge ",
             b"block ", b"rank ", b"pass ", b"disk ", b"tape "]
    with open(path, "wb") as fh:
        written = 0
        while written < total:
            kind = int(rng.integers(0, 4))
            if kind == 0:
                seg = rng.integers(0, 256, 1 << 20, dtype=np.uint8).tobytes()
            elif kind == 1:
                seg = block * 1024
            elif kind == 2:
                idx = rng.integers(0, len(words), 1 << 18)
                seg = b"".join(words[i] for i in idx)
            else:
                seg = bytes([int(rng.integers(97, 123))]) * (1 << 20)
            seg = seg[:total - written]
            fh.write(seg)
            written += len(seg)


def files_equal(a, b):
    with open(a, "rb") as fa, open(b, "rb") as fb:
        while True:
            ca = fa.read(8 << 20)
            cb = fb.read(8 << 20)
            if ca != cb:
                return False
            if not ca:
                return True


def test_criterion_2_roundtrip_100mib_mixed(tmp_path):
    """The big leg: a 100 MiB mixed file survives transform + inversion.
    The repetitive stretches make block sorting run its doubling loop to
    full depth, so a moderate block size beats a large one here; this
    test runs for roughly half an hour on one slow core."""
    src = tmp_path / "mix.bin"
    bwt = tmp_path / "mix.bwt"
    out = tmp_path / "mix.out"
    write_mixed_file(str(src), 100 << 20)
    build_bwt(str(src), str(bwt),
              BuildConfig(block_size=4 << 20, workdir=str(tmp_path)))
    scan_unbwt(str(bwt), str(out), workdir=str(tmp_path))
    assert files_equal(str(src), str(out))


def test_criterion_3_pass_counts(tmp_path):
    """stats['passes'] is exactly ceil((n+1)/m) over the whole grid."""
    rng = np.random.default_rng(0xC3)
    out = str(tmp_path / "o.bin")
    for n in (0, 1, 2, 3, 5, 16, 63, 64, 65, 255, 1000, 2048):
        text = random_text(rng, n, 4)
        for m in BLOCKS:
            stats = build_bwt(text, out, BuildConfig(block_size=m,
                                                     mode="internal"))
            assert stats["passes"] == -(-(n + 1) // m), (n, m)
    # spot-check that the other builders follow the same schedule
    text = random_text(rng, 500, 4)
    for builder in (build_sa, build_psi):
        stats = builder(text, out, BuildConfig(block_size=64,
                                               mode="internal"))
        assert stats["passes"] == -(-501 // 64)
    stats = build_posd(text, out, 5, BuildConfig(block_size=64,
                                                 mode="internal"))
    assert stats["passes"] == -(-501 // 64)


def space_bound_two_file(n, page):
    return 2 * n + -(-n // 8) + 64 * page


def space_bound_in_place(n, page):
    return -(-n // 8) + 64 * page


def test_criterion_4_working_space(tmp_path):
    """Raw-codec disk builds stay under the advertised temp ceilings:
    flag bits plus page slack in place, plus two text images two-file."""
    rng = np.random.default_rng(0xC4)
    for n in (4096, 256 << 10, 1 << 20):
        text = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        src = tmp_path / "in.bin"
        src.write_bytes(text)
        for layout, bound in (("two-file", space_bound_two_file),
                              ("in-place", space_bound_in_place)):
            cfg = BuildConfig(block_size=64 << 10, codec="identity",
                              layout=layout, workdir=str(tmp_path))
            stats = build_bwt(str(src), str(tmp_path / "o.bwt"), cfg)
            assert stats["peak_temp_bytes"] <= bound(n, cfg.page_size), \
                (n, layout, stats["peak_temp_bytes"])


def test_criterion_5_rle_temp_advantage(tmp_path):
    """On a highly repetitive 10 MiB input the run-length temp layout
    uses less than half the raw layout's peak temp space."""
    rng = np.random.default_rng(0xC5)
    block = rng.integers(0, 256, 1024, dtype=np.uint8).tobytes()
    src = tmp_path / "rep.bin"
    src.write_bytes(block * (10 << 10))
    peaks = {}
    for codec in ("identity", "rle"):
        cfg = BuildConfig(block_size=1 << 20, codec=codec,
                          workdir=str(tmp_path))
        stats = build_bwt(str(src), str(tmp_path / "o.bwt"), cfg)
        peaks[codec] = stats["peak_temp_bytes"]
    assert peaks["rle"] < 0.5 * peaks["identity"], peaks


def test_criterion_6_inversion_round_bound(tmp_path):
    """Scan inversion finishes within 2*ceil(log2(n+1)) + 4 rounds and
    keeps exactly the budgeted cursor count busy while rows remain."""
    rng = np.random.default_rng(0xC6)
    corpus = [b"", b"a", "ололо".encode("utf-8"), b"q" * 257,
              fibonacci_word(233),
              periodic_text(rng, 5, 40)]
    for sigma in SIGMAS:
        corpus.append(random_text(rng, int(rng.integers(1, 1200)), sigma))
    for text in corpus:
        src = tmp_path / "c6.bwt"
        dst = tmp_path / "c6.out"
        build_bwt(text, str(src), BuildConfig(block_size=128,
                                              mode="internal"))
        diag = {}
        stats = scan_unbwt(str(src), str(dst), diagnostics=diag)
        assert dst.read_bytes() == text
        total = len(text) + 1
        bound = 4 if total <= 1 else 2 * math.ceil(math.log2(total)) + 4
        assert stats["rounds"] <= bound, (text[:20], stats["rounds"], bound)
        assert diag["k"] == piece_budget(total)
        for recs, marks in zip(diag["round_records"], diag["round_marks"]):
            if marks < total:
                assert recs == diag["k"]


def test_criterion_7_wall_time_scaling(tmp_path):
    """Fixed 64 KiB blocks: doubling the input from 4 to 8 MiB scales
    wall time by the pass-count times text-length growth, inside a wide
    band that still rules out linear or cubic behaviour."""
    rng = np.random.default_rng(0xC7)
    cfg = lambda: BuildConfig(block_size=64 << 10, codec="identity",
                              workdir=str(tmp_path))
    # prewarm compiled kernels so compilation never lands in a sample
    warm = tmp_path / "warm.bin"
    warm.write_bytes(rng.integers(0, 256, 1 << 18, dtype=np.uint8).tobytes())
    build_bwt(str(warm), str(tmp_path / "w.bwt"), cfg())
    walls = {}
    for mib in (4, 8):
        src = tmp_path / ("t%d.bin" % mib)
        src.write_bytes(
            rng.integers(0, 256, mib << 20, dtype=np.uint8).tobytes())
        t0 = time.monotonic()
        build_bwt(str(src), str(tmp_path / "t.bwt"), cfg())
        walls[mib] = time.monotonic() - t0
    ratio = walls[8] / walls[4]
    assert 3.0 <= ratio <= 5.5, walls


def test_criterion_8_mode_equivalence(tmp_path):
    """Inputs up to 1 MiB: the in-memory and the on-disk engines emit
    byte-identical product files."""
    rng = np.random.default_rng(0xC8)
    texts = [b"", b"a", (b"needle in a haystack " * 200)[:4096],
             random_text(rng, 100 << 10, 26),
             rng.integers(0, 256, 1 << 20, dtype=np.uint8).tobytes(),
             rng.integers(0, 256, 1024, dtype=np.uint8).tobytes() * 64]
    builders = [("bwt", lambda s, o, c: build_bwt(s, o, c)),
                ("sa", lambda s, o, c: build_sa(s, o, c)),
                ("psi", lambda s, o, c: build_psi(s, o, c)),
                ("posd", lambda s, o, c: build_posd(s, o, 4, c))]
    for k, text in enumerate(texts):
        src = tmp_path / ("t%d.bin" % k)
        src.write_bytes(text)
        for name, fn in builders:
            pair = []
            for mode in ("internal", "external"):
                out = tmp_path / ("%s.%s" % (name, mode))
                fn(str(src), str(out),
                   BuildConfig(block_size=64 << 10, mode=mode,
                               workdir=str(tmp_path)))
                pair.append(out.read_bytes())
            assert pair[0] == pair[1], (k, name)


def test_stats_report_shape(tmp_path):
    """Every engine returns exactly the six advertised counters."""
    want = {"passes", "rounds", "bytes_read", "bytes_written",
            "peak_temp_bytes", "wall_ms"}
    out = str(tmp_path / "o.bin")
    text = b"statistics are part of the contract"
    cfg = BuildConfig(block_size=8, mode="internal")
    for stats in (build_bwt(text, out, cfg),
                  build_sa(text, out, cfg),
                  build_psi(text, out, cfg),
                  build_posd(text, out, 2, cfg)):
        assert set(stats) == want
        assert all(isinstance(v, int) and v >= 0 for v in stats.values())
    bwt = tmp_path / "s.bwt"
    build_bwt(text, str(bwt), cfg)
    for stats in (scan_unbwt(str(bwt), out), naive_unbwt(str(bwt), out)):
        assert set(stats) == want
        assert all(isinstance(v, int) and v >= 0 for v in stats.values())
