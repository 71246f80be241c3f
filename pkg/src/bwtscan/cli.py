"""Command line frontend.

Exit codes: 0 success, 1 I/O or data errors, 2 usage errors, 3 verify
mismatch. Stats, when requested, land in a small JSON report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .builders import BuildConfig, EXTERNAL, INTERNAL, UsageError, \
    build_bwt, build_posd, build_psi, build_sa
from .formats import FormatError, read_bwt_file, read_posd_file, \
    read_psi_file, read_sa_file
from .invert import InvertError, naive_unbwt, scan_unbwt
from .listrank import ListRankError
from .oracle import OracleError, oracle_all
from .streams import StreamError

VERIFY_LIMIT = 1 << 20   # largest n+1 the oracle cross-check will take


def _build_flags(p, default_codec):
    p.add_argument("input", help="input file")
    p.add_argument("-o", "--output", required=True, help="output file")
    p.add_argument("--block-size", type=int, default=64 << 20,
                   metavar="BYTES", help="rows sorted per pass "
                   "(default 64 MiB)")
    p.add_argument("--codec", choices=("identity", "rle"),
                   default=default_codec,
                   help="payload coding (default %s)" % default_codec)
    p.add_argument("--layout", choices=("two-file", "in-place"),
                   default="two-file",
                   help="temp layout for the transform build")
    p.add_argument("--internal", action="store_true",
                   help="keep all temp state in memory")
    p.add_argument("--mem-budget", type=int, default=256 << 20,
                   metavar="BYTES", help="working memory bound")
    p.add_argument("--stats", metavar="PATH",
                   help="write a JSON stats report here")


def _parser():
    top = argparse.ArgumentParser(
        prog="bwtscan",
        description="Build and invert Burrows-Wheeler transforms, suffix "
                    "arrays, successor arrays, and position samples by "
                    "sequential scans.")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bwt", help="build the transform of a file")
    _build_flags(p, "rle")
    p.set_defaults(func=_cmd_bwt)

    p = sub.add_parser("unbwt", help="recover a file from its transform")
    p.add_argument("input", help="transform file")
    p.add_argument("-o", "--output", required=True, help="output file")
    p.add_argument("--naive", action="store_true",
                   help="in-memory walk instead of the scan rounds")
    p.add_argument("--mem-budget", type=int, default=256 << 20,
                   metavar="BYTES", help="working memory bound")
    p.add_argument("--stats", metavar="PATH",
                   help="write a JSON stats report here")
    p.set_defaults(func=_cmd_unbwt)

    p = sub.add_parser("sa", help="build the suffix array of a file")
    _build_flags(p, "identity")
    p.set_defaults(func=_cmd_sa)

    p = sub.add_parser("psi", help="build the successor array of a file")
    _build_flags(p, "identity")
    p.set_defaults(func=_cmd_psi)

    p = sub.add_parser("posd", help="sample suffix positions at a stride")
    _build_flags(p, "identity")
    p.add_argument("--d", type=int, default=1, metavar="STEP",
                   help="position stride (default 1)")
    p.set_defaults(func=_cmd_posd)

    p = sub.add_parser("verify",
                       help="cross-check every product against the "
                            "in-memory reference on a small file")
    p.add_argument("input", help="plain text file")
    p.add_argument("--block-size", type=int, default=None, metavar="BYTES")
    p.add_argument("--mem-budget", type=int, default=256 << 20,
                   metavar="BYTES")
    p.add_argument("--d", type=int, default=1, metavar="STEP",
                   help="stride for the position-sample check (default 1)")
    p.set_defaults(func=_cmd_verify)
    return top


def _config(args):
    return BuildConfig(
        block_size=args.block_size,
        codec=args.codec,
        mode=INTERNAL if args.internal else EXTERNAL,
        layout=args.layout,
        memory_budget=args.mem_budget,
    )


def _emit_stats(args, stats):
    if args.stats:
        with open(args.stats, "w") as fh:
            json.dump(stats, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _cmd_bwt(args):
    stats = build_bwt(args.input, args.output, _config(args))
    _emit_stats(args, stats)
    return 0


def _cmd_unbwt(args):
    if args.naive:
        stats = naive_unbwt(args.input, args.output)
    else:
        stats = scan_unbwt(args.input, args.output,
                           mem_budget=args.mem_budget)
    _emit_stats(args, stats)
    return 0


def _cmd_sa(args):
    stats = build_sa(args.input, args.output, _config(args))
    _emit_stats(args, stats)
    return 0


def _cmd_psi(args):
    stats = build_psi(args.input, args.output, _config(args))
    _emit_stats(args, stats)
    return 0


def _cmd_posd(args):
    stats = build_posd(args.input, args.output, args.d, _config(args))
    _emit_stats(args, stats)
    return 0


def _cmd_verify(args):
    size = os.path.getsize(args.input)
    if size + 1 > VERIFY_LIMIT:
        print("verify: input too large (limit %d bytes)"
              % (VERIFY_LIMIT - 1), file=sys.stderr)
        return 2
    with open(args.input, "rb") as fh:
        text = fh.read()
    ref = oracle_all(text)
    cfg = BuildConfig(block_size=args.block_size, mode=INTERNAL,
                      memory_budget=args.mem_budget)
    ok = True
    with tempfile.TemporaryDirectory(prefix="bwtscan-verify-") as td:
        path = os.path.join(td, "product")

        build_bwt(text, path, cfg)
        n, primary0, payload = read_bwt_file(path)
        good = (n == ref.n and primary0 == ref.primary_index0
                and payload == ref.payload_bytes().tobytes())
        ok &= _report("bwt", good)

        build_sa(text, path, cfg)
        good = np.array_equal(read_sa_file(path).astype(np.int64),
                              ref.sa_file_values().astype(np.int64))
        ok &= _report("sa", good)

        build_psi(text, path, cfg)
        good = np.array_equal(read_psi_file(path).astype(np.int64),
                              ref.psi.astype(np.int64))
        ok &= _report("psi", good)

        build_posd(text, path, args.d, cfg)
        d, pairs = read_posd_file(path)
        want = ref.pos_pairs(args.d)
        good = d == args.d and np.array_equal(pairs.astype(np.int64),
                                              want.astype(np.int64))
        ok &= _report("posd", good)
    return 0 if ok else 3


def _report(name, good):
    print("%s: %s" % (name, "ok" if good else "MISMATCH"))
    return bool(good)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print("bwtscan: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, StreamError, FormatError, InvertError, ListRankError,
            OracleError) as exc:
        print("bwtscan: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
