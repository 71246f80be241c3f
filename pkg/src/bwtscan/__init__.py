"""External-memory construction and inversion of Burrows-Wheeler data.

Everything is built by sequential scans over bounded-size blocks: the
transform itself, the suffix array, the suffix-successor array, and
sampled suffix positions, plus a scan-based inverter that reassembles
the text from cursor pieces. See the README for file formats and the
index conventions.
"""

from .builders import BuildConfig, UsageError, build_bwt, build_posd, \
    build_psi, build_sa
from .formats import FormatError, read_bwt_file, read_posd_file, \
    read_psi_file, read_sa_file
from .invert import InvertError, naive_unbwt, piece_budget, scan_unbwt
from .listrank import ListRankError, list_rank
from .oracle import OracleError, OracleResult, oracle_all, oracle_gap
from .streams import SpaceLedger, StreamError

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "FormatError",
    "InvertError",
    "ListRankError",
    "OracleError",
    "OracleResult",
    "SpaceLedger",
    "StreamError",
    "UsageError",
    "build_bwt",
    "build_posd",
    "build_psi",
    "build_sa",
    "list_rank",
    "naive_unbwt",
    "oracle_all",
    "oracle_gap",
    "piece_budget",
    "read_bwt_file",
    "read_posd_file",
    "read_psi_file",
    "read_sa_file",
    "scan_unbwt",
]
