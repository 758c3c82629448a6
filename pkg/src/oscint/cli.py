"""Command line: ``oscint bench | scaling | verify``.

Exit codes: 0 success, 1 usage error, 2 tolerance breach or failed check.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench
from ._validation import ParameterError
from .butterfly import FAULT_XI_RECURSION
from .pipeline import PATHS, SCENARIOS, PlanningError

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
GROWTH_LIMIT = 8.0
DEC_GROWTH_LIMIT = 5.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _check_sizes(ns):
    for n in ns:
        if n <= 0 or n & (n - 1):
            raise UsageError(f"--n must be a power of two, got {n}")


def _common(p, n_help):
    p.add_argument("--kernel", default="fio1d",
                   help="fio1d, fio-split, fio-smooth, hankel or synthetic:<kind>")
    p.add_argument("--n", type=_int_list, required=True, help=n_help)
    p.add_argument("--rank-eps", type=_int_list, default=[8], help="comma list of butterfly ranks")
    p.add_argument("--rank", type=int, default=20, help="amplitude / phase recovery rank")
    p.add_argument("--oversampling", type=int, default=5)
    p.add_argument("--tau", type=float, default=np.pi / 2, help="break detection threshold")
    p.add_argument("--tol", type=float, default=1e-12, help="NUFFT tolerance and decision cutoff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=SCENARIOS, default="entry")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (1 keeps runs bitwise reproducible)")
    p.add_argument("--repeat", type=int, default=3, help="timing repetitions (median is reported)")
    p.add_argument("--out", type=Path, help="report file; a sibling in the other format is also written")
    p.add_argument("--format", choices=("csv", "json"), help="report format (default from --out suffix, else csv)")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser():
    ap = _Parser(prog="oscint", description="Fast oscillatory integral transforms: benchmarks and checks.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="errors and timings for each (N, r_eps)")
    _common(b, "problem size(s), comma list")
    b.add_argument("--force-path", choices=PATHS, default="auto")
    b.add_argument("--no-direct", action="store_true", help="skip timing the dense reference")
    b.add_argument("--max-eps-b", type=float, help="butterfly error budget (default depends on r_eps)")
    b.add_argument("--max-eps-n", type=float, default=bench.MAX_EPS_N)

    s = sub.add_parser("scaling", help="per-quadrupling growth of the timings over an N sweep")
    _common(s, "sweep of at least two sizes, comma list")
    s.add_argument("--force-path", choices=PATHS, default="bf")
    s.add_argument("--timings", default=",".join(bench.TIMINGS), help="subset of T_rec,T_fac,T_app,T_dec")
    s.add_argument("--max-growth", type=float, default=GROWTH_LIMIT)
    s.add_argument("--max-dec-growth", type=float, default=DEC_GROWTH_LIMIT)

    v = sub.add_parser("verify", help="property suites at N <= 512")
    v.add_argument("--suite", default="", help="comma list of suites (default: all)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", choices=(FAULT_XI_RECURSION,), help="test hook: corrupt one recursion")
    v.add_argument("--list", action="store_true", help="list suites and exit")
    return ap


def _fmt(args):
    if args.format:
        return args.format
    if args.out is not None and args.out.suffix.lower() == ".json":
        return "json"
    return "csv"


def _write_report(records, args, extra=None):
    fmt = _fmt(args)
    text = {"csv": bench.to_csv, "json": bench.to_json}
    if args.out is None:
        sys.stdout.write(text[fmt](records))
        return
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text[fmt](records))
    other = "json" if fmt == "csv" else "csv"
    args.out.with_suffix("." + other).write_text(text[other](records))
    meta = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    meta.update(extra or {})
    args.out.with_suffix(".provenance.json").write_text(
        json.dumps(bench.provenance(meta), indent=1, sort_keys=True) + "\n")


def _log(args):
    return None if args.quiet else (lambda s: print(s, file=sys.stderr))


def _run(args, ns, measure, direct):
    recs = []
    for n in ns:
        recs += bench.run_bench(
            args.kernel, n, args.rank_eps, rank=args.rank, oversampling=args.oversampling, tau=args.tau,
            tol=args.tol, seed=args.seed, scenario=args.scenario, force_path=args.force_path,
            repeat=args.repeat, direct=direct, measure=measure, log=_log(args),
        )
    return recs


def cmd_bench(args):
    _check_sizes(args.n)
    recs = _run(args, args.n, bench.TIMINGS, not args.no_direct)
    bad = []
    for r in recs:
        bad += bench.breaches(r, args.max_eps_b, args.max_eps_n)
    _write_report(recs, args, {"breaches": bad})
    for line in bad:
        print("tolerance breach: " + line, file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_scaling(args):
    _check_sizes(args.n)
    ns = sorted(set(args.n))
    if len(ns) < 2:
        raise UsageError("scaling needs at least two sizes in --n")
    measure = [t.strip() for t in args.timings.split(",") if t.strip()]
    unknown = [t for t in measure if t not in bench.TIMINGS]
    if unknown or not measure:
        raise UsageError(f"--timings must be a subset of {','.join(bench.TIMINGS)}")
    args.rank_eps = args.rank_eps[:1]
    recs = _run(args, ns, measure, False)
    flagged = []
    report = {}
    for key in measure:
        limit = args.max_dec_growth if key == "T_dec" else args.max_growth
        rows = bench.growth_factors(recs, key)
        report[key] = [[a, b, g] for a, b, g in rows]
        for a, b, g in rows:
            mark = "  FLAG" if g > limit else ""
            print(f"{key} {a:>6d} -> {b:<6d} growth x{g:.2f} per quadrupling (limit {limit:g}){mark}")
            if g > limit:
                flagged.append(f"{key} {a}->{b}: x{g:.2f} > {limit:g}")
    if args.out is not None:
        _write_report(recs, args, {"growth": report, "flagged": flagged})
    return EXIT_FAIL if flagged else EXIT_OK


def cmd_verify(args):
    from .verify import SUITES, run_suites

    if args.list:
        for name, fn in SUITES.items():
            print(f"{name:10s} {fn.__doc__.strip().splitlines()[0]}")
        return EXIT_OK
    names = [s.strip() for s in args.suite.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    checks, secs = run_suites(names, seed=args.seed, fault=args.inject_fault)
    failed = [c for c in checks if not c.ok]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed in {secs:.1f} s")
    if failed:
        print("failing invariants:")
        for c in failed:
            print(f"  [{c.suite}] {c.name}")
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "scaling": cmd_scaling, "verify": cmd_verify}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.cmd == "verify":
            return COMMANDS[args.cmd](args)
        if args.threads < 1 or args.repeat < 1:
            raise UsageError("--threads and --repeat must be positive")
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.cmd](args)
    except (UsageError, ParameterError, PlanningError) as exc:
        ap.print_usage(sys.stderr)
        print(f"oscint {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
