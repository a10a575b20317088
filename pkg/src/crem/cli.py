"""Command-line entry point: ``crem <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import DEFAULT_SEED, acceptance_suite
from .batch import estimate_row, load_config, rows_to_csv, run_batch, run_point, GridPoint, QUANTITIES
from .bounds import bound_ledger
from .errors import CremError
from .estimators import estimate_left_tail
from .partition import log_partition
from .profile import beta_c, concave_hull, free_energy, load_profile, max_growth_rate
from .sampler import TreeSample, sample_tree
from .suites import SUITES, CheckRow, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SAMPLE_MAGIC = b"CREM"
SAMPLE_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


# --- binary sample files ----------------------------------------------------


def write_sample(path, sample: TreeSample) -> None:
    """Header (magic, version, N, k, seed) then node values breadth-first, little-endian."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SAMPLE_MAGIC, SAMPLE_VERSION, sample.N, sample.offset, sample.seed & ((1 << 64) - 1)))
        fh.write(np.ascontiguousarray(sample.node_values, dtype="<f8").tobytes())


def read_sample(path):
    """Returns (N, k, seed, node_values)."""
    data = Path(path).read_bytes()
    magic, version, N, k, seed = _HEADER.unpack_from(data)
    if magic != SAMPLE_MAGIC:
        raise CremError(f"{path}: not a sample file")
    if version != SAMPLE_VERSION:
        raise CremError(f"{path}: unsupported version {version}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    if values.size != 2 ** (N - k + 1) - 2:
        raise CremError(f"{path}: expected {2 ** (N - k + 1) - 2} values, found {values.size}")
    return N, k, seed, values


# --- subcommands ------------------------------------------------------------


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_profile_info(args) -> int:
    prof = load_profile(args.profile)
    hull = concave_hull(prof)
    info = {
        "profile_hash": prof.digest(),
        "knots": [list(k) for k in prof.knots],
        "holder_alpha": prof.holder_alpha,
        "holder_C": prof.holder_C,
        "x1": prof.x1,
        "hull_knots": [list(k) for k in hull.knots],
        "hull_slopes": list(hull.slopes),
        "slope0": hull.slope0,
        "beta_c": beta_c(hull),
        "max_growth_rate": max_growth_rate(hull),
        "free_energy": {repr(b): free_energy(hull, b) for b in args.beta},
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_sample(args) -> int:
    prof = load_profile(args.profile)
    s = sample_tree(prof, args.n, args.k, args.seed, args.replicate)
    write_sample(args.out, s)
    if args.beta is not None:
        print(f"log_Z={log_partition(s, args.beta)!r}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    prof = load_profile(args.profile)
    if args.quantity == "negmoment" and args.s is None:
        raise CremError("negmoment needs --s")
    if args.quantity == "lefttail" and args.eps is None:
        raise CremError("lefttail needs --eps")
    point = GridPoint(args.n, args.k, args.beta, args.s, args.eps)
    est = run_point(prof, args.quantity, point, args.reps, args.seed, args.threads)
    _emit(rows_to_csv([estimate_row(args.quantity, est)]), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    prof = load_profile(args.profile)
    rows = run_suite(args.suite, prof, args.reps, args.seed, args.tree_reps, args.threads)
    lines = [",".join(CheckRow.header())] + [",".join(r.cells()) for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    bad = [r.case_id for r in rows if not r.passed]
    if bad:
        print(f"{len(bad)} of {len(rows)} cases failed: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_bounds(args) -> int:
    prof = load_profile(args.profile)
    ledger = bound_ledger(prof, args.beta, args.s, args.n, args.gamma)
    if args.empirical_eta0:
        n_sim = args.empirical_n if args.empirical_n is not None else min(args.n, 16)
        est = estimate_left_tail(prof, n_sim, 0, args.beta, 0.5, args.reps, args.seed, args.threads)
        ledger.empirical_eta0 = est.mean
        ledger.empirical_eta0_stderr = est.stderr
        ledger.empirical = {"N": n_sim, "reps": est.reps, "seed": est.seed, "upper_95": est.upper}
    print(json.dumps(ledger.to_dict(), indent=2))
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    rows = run_batch(cfg, args.threads)
    _emit(rows_to_csv(rows), args.out or cfg.output)
    return EXIT_OK


def cmd_accept(args) -> int:
    only = None
    if args.only:
        only = sorted({int(x) for x in args.only.split(",")})
    report = acceptance_suite(args.seed, args.threads, only, args.profile_dir, log=print)
    if args.report:
        Path(args.report).write_text(report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print("ACCEPTANCE", "PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


# --- parser -----------------------------------------------------------------


def _threads(p):
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $CREM_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crem", description="Continuous random energy model toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile-info", help="hull, beta_c, free energy and max growth of a profile")
    p.add_argument("profile", help="profile JSON file or builtin name (lin, pw1, pw2)")
    p.add_argument("--beta", type=float, action="append", default=[], help="inverse temperature (repeatable)")
    p.set_defaults(func=cmd_profile_info)

    p = sub.add_parser("sample", help="dump one tree sample as a binary file")
    p.add_argument("--profile", default="lin")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--beta", type=float, default=None, help="also print log Z at this beta")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="Monte Carlo estimate of one quantity")
    p.add_argument("--quantity", choices=QUANTITIES, required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    _threads(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="cross-check two computation paths")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--profile", default="lin")
    p.add_argument("--reps", type=int, default=100_000, help="walk or draw replicates")
    p.add_argument("--tree-reps", type=int, default=20_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    _threads(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="print every constant of the bound argument as JSON")
    p.add_argument("--profile", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--empirical-eta0", action="store_true", help="add a Monte Carlo estimate of P(W <= 1/2)")
    p.add_argument("--empirical-n", type=int, default=None, help="tree depth for the estimate (default: min(N, 16))")
    p.add_argument("--reps", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _threads(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("batch", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    _threads(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--only", default=None, help="comma-separated criterion numbers")
    p.add_argument("--profile-dir", default=None, help="directory with lin.json, pw1.json, pw2.json")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--csv", default=None, help="write per-case rows here")
    _threads(p)
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CremError, OSError, ValueError) as exc:
        print(f"crem {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
