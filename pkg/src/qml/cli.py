"""Command-line front end: ``qml <subcommand> [flags]``.

Exit codes: 0 success, 1 domain or precondition error, 2 I/O error,
3 accuracy error. Diagnostics go to stderr; data goes to stdout or --output.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from qml import emit as out
from qml import lcentral, moments, mollifier
from qml.arith import sieve_primes
from qml.errors import CacheError, ConfigurationError, QMLError

DEFAULT_EPS = 1e-8
DEFAULT_X_GRID = (1e4, 1e5, 1e6)
LONG_X = 1e7


class UsageError(QMLError):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _natural(text: str) -> int:
    value = _number(text)
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def default_workers() -> int:
    env = os.environ.get("QML_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"QML_WORKERS must be a positive integer, got {env!r}") from None
        if n >= 1:
            return n
        raise ConfigurationError(f"QML_WORKERS must be a positive integer, got {env!r}")
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value file supplying defaults; flags override it")
    common.add_argument("--workers", type=_natural, help="worker count (default: $QML_WORKERS, else CPU count)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    common.add_argument("--output", metavar="PATH", help="write data here instead of stdout (atomic)")

    cached = _Parser(add_help=False)
    cached.add_argument("--cache", metavar="PATH", help="central-value cache file (created if absent)")
    cached.add_argument("--eps", type=_number, default=DEFAULT_EPS, help="central-value tolerance (default 1e-8)")
    cached.add_argument(
        "--offline", action="store_true", help="never compute missing central values; fail listing the gap"
    )

    parser = _Parser(prog="qml", description="Central values and moments of L(1/2, chi_8p) over primes p.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("sieve", parents=[common], help="sieve primes and optionally save the binary table")
    p.add_argument("--limit", type=_number, required=True, help="inclusive upper bound")
    p.add_argument("--table", metavar="PATH", help="save the QMLPT1 binary table here")

    p = sub.add_parser("lvalues", parents=[common, cached], help="fill the central-value cache")
    p.add_argument("--pmin", type=_number, default=3, help="smallest prime (default 3)")
    p.add_argument("--pmax", type=_number, required=True, help="largest prime")

    p = sub.add_parser("moments", parents=[common, cached], help="moment sums and normalized ratios")
    p.add_argument("--k", type=_number, nargs="+", required=True, help="moment parameter(s)")
    p.add_argument("--X", type=_number, nargs="+", required=True, help="family size(s)")
    p.add_argument("--weight", choices=moments.WEIGHTS, default="sharp", help="sharp cutoff or smooth PHI(p/X)")
    p.add_argument("--power", choices=moments.POWERS, default="L^k", help="summand (default L^k)")
    p.add_argument("--M", type=_natural, default=1, help="ladder cutoff exponent for mollified powers")

    p = sub.add_parser("charsum", parents=[common], help="smoothed character sums over p")
    p.add_argument("--c", type=_natural, nargs="+", required=True, help="odd modulus argument(s)")
    p.add_argument("--X", type=_number, required=True, help="family size")

    p = sub.add_parser("twisted", parents=[common, cached], help="twisted first moment against its main term")
    p.add_argument("--ell", type=_natural, nargs="+", required=True, help="twist(s), 1 <= ell <= sqrt(X)")
    p.add_argument("--X", type=_number, required=True, help="family size")

    p = sub.add_parser("mollify-verify", parents=[common], help="check the per-block mollifier inequalities")
    p.add_argument("--k", type=_number, required=True, help="moment parameter, k != 1/2")
    p.add_argument("--X", type=_number, required=True, help="family size defining the ladder")
    p.add_argument("--M", type=_natural, default=1, help="ladder cutoff exponent (default 1)")
    p.add_argument("--pmax", type=_number, help="check primes up to this bound (default X)")
    p.add_argument("--C", type=_number, default=10.0, help="constant in the factor bound (default 10)")

    p = sub.add_parser("deviations", parents=[common, cached], help="large-deviation counts of log L")
    p.add_argument("--X", type=_number, required=True, help="family size")
    p.add_argument("--V", type=_number, nargs="+", help="thresholds (default -3..3 step 0.5)")

    p = sub.add_parser("report", parents=[common, cached], help="order-of-magnitude report over an X grid")
    p.add_argument("--k", type=_number, nargs="+", default=[0.0, 1.0, 2.0], help="moment parameters")
    p.add_argument("--X", type=_number, nargs="+", help="family sizes (default 1e4 1e5 1e6)")
    p.add_argument("--weight", choices=moments.WEIGHTS, default="sharp", help="sharp cutoff or smooth PHI(p/X)")
    p.add_argument("--long", action="store_true", help="extend the default grid to X = 1e7")
    return parser


def read_config(path) -> dict[str, str]:
    """Parse a key=value file; blank lines and '#' comments are ignored."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CacheError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _config_argv(sub_parser, config: dict[str, str]) -> list[str]:
    """Translate config entries into flags placed before the command line's own flags."""
    flags = {}
    for action in sub_parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:].replace("-", "_")] = action
    argv = []
    for key, value in config.items():
        action = flags.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigurationError(f"unknown config key {key!r}")
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(action.option_strings[0])
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigurationError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv.append(action.option_strings[0])
            argv.extend(value.split() if action.nargs == "+" else [value])
    return argv


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((i for i, tok in enumerate(argv) if tok in COMMANDS), None)
    if known.config and command is not None:
        sub_parser = parser._subparsers._group_actions[0].choices[argv[command]]
        extra = _config_argv(sub_parser, read_config(known.config))
        argv = [*argv[: command + 1], *extra, *argv[command + 1 :]]
    args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = default_workers()
    return args


# -- cache handling -------------------------------------------------------------------------


def load_table(args, p_max: float) -> lcentral.LValueTable:
    """Central values for odd primes up to p_max, through the cache when one is given."""
    p_max = int(p_max)
    if args.cache:
        cache = lcentral.LValueCache.open(args.cache, args.eps)
        if not args.offline:
            added = cache.ensure(3, p_max, workers=args.workers)
            if added:
                print(f"qml: computed {added} central values into {args.cache}", file=sys.stderr)
        return cache.table()
    if args.offline:
        raise ConfigurationError("--offline needs --cache")
    records = lcentral.batch_central_values(3, max(p_max, 3), args.eps, args.workers)
    return lcentral.LValueTable.from_records(records, args.eps)


# -- subcommands -------------------------------------------------------------------------------


def cmd_sieve(args):
    table = sieve_primes(int(args.limit))
    if args.table:
        table.save(args.table)
    out.emit(("limit", "count"), [{"limit": table.limit, "count": len(table)}], args.format, args.output)


def cmd_lvalues(args):
    if not args.cache:
        raise ConfigurationError("lvalues needs --cache")
    if not 2 < args.pmin <= args.pmax:
        raise ConfigurationError(f"need 2 < pmin <= pmax, got [{args.pmin:g}, {args.pmax:g}]")
    cache = lcentral.LValueCache.open(args.cache, args.eps)
    before = len(cache)
    if args.offline:
        missing = cache.missing(lcentral.odd_primes_between(int(args.pmin), int(args.pmax)))
        added = 0
        if len(missing):
            raise CacheError(f"{len(missing)} values missing from {args.cache}")
    else:
        added = cache.ensure(int(args.pmin), int(args.pmax), workers=args.workers)
    print(f"qml: {added} computed, {before} reused, cache {args.cache} eps={cache.eps!r}", file=sys.stderr)


def _x_grid(values):
    grid = [float(x) for x in values]
    for x in grid:
        if x < 16:
            raise ConfigurationError(f"X must be >= 16, got {x:g}")
    return grid


def cmd_moments(args):
    grid = _x_grid(args.X)
    top = max(grid) * (moments.PHI.support[1] if args.weight == "smooth" else 1)
    needs_values = args.power in ("L^k", "L*N", "L^2*N") and any(k != 0 for k in args.k)
    table = load_table(args, top) if needs_values else None
    if args.power == "L^k":
        reports = moments.magnitude_report(args.k, grid, table, args.weight)
        rows = [row for r in reports for row in r.rows()]
        meta = reports[0].metadata if reports else None
        out.emit(moments.REPORT_HEADER, rows, args.format, args.output, meta)
        return
    rows = []
    for k in args.k:
        for x in grid:
            ms = moments.moment_sum(k, x, table, args.weight, args.power, M=args.M)
            rows.append({"k": k, "X": x, "power": ms.power, "sum": ms.value, "log_sum": ms.log_value, "error_bound": ms.error_bound})
    out.emit(("k", "X", "power", "sum", "log_sum", "error_bound"), rows, args.format, args.output)


def cmd_charsum(args):
    rows = []
    for c in args.c:
        r = moments.smoothed_charsum(c, args.X)
        rows.append({"c": c, "X": args.X, "sum": r.sum, "main": r.main, "residual": r.residual})
    out.emit(("c", "X", "sum", "main", "residual"), rows, args.format, args.output)


def cmd_twisted(args):
    for ell in args.ell:
        if ell < 1:
            raise ConfigurationError(f"ell must be >= 1, got {ell}")
        if ell > math.sqrt(args.X):
            raise ConfigurationError(f"ell must be <= sqrt(X), got ell={ell}, X={args.X:g}")
    table = load_table(args, moments.PHI.support[1] * args.X)
    rows = []
    for ell in args.ell:
        r = moments.twisted_first_moment(ell, args.X, table)
        rows.append({"ell": r.ell, "ell1": r.ell1, "X": r.X, "sum": r.sum, "main": r.main, "rel_dev": r.rel_dev})
    out.emit(("ell", "ell1", "X", "sum", "main", "rel_dev"), rows, args.format, args.output)


def cmd_mollify_verify(args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", mollifier.LadderWarning)
        params = mollifier.build_params(args.k, args.X, args.M)
    for w in caught:
        print(f"qml: warning: {w.message}", file=sys.stderr)
    mollifier.r_exponent(args.k)
    p_max = args.X if args.pmax is None else args.pmax
    ps = moments.family_primes(p_max, "sharp")
    P = mollifier.block_sums(ps, params)
    rows = []
    for p, row in zip(ps.tolist(), P):
        rep = mollifier.verify_factor_inequalities(p, args.k, params, args.C, P=row)
        for e in rep.entries:
            rows.append({"p": p, **e})
    failed = sum(1 for r in rows if r["pass"] is False)
    print(f"qml: {len(rows)} checks on {len(ps)} primes, {failed} failed", file=sys.stderr)
    if args.format == "json":
        out.emit(("p", "block", "check", "pass", "witness", "constant"), rows, "json", args.output)
    else:
        out.emit(("p", "block", "check", "pass", "constant"), rows, "csv", args.output)


def cmd_deviations(args):
    table = load_table(args, args.X)
    grid = args.V if args.V else list(np.arange(-3.0, 3.01, 0.5))
    hist = moments.deviation_counts(args.X, grid, table)
    if hist.nonpositive:
        print(f"qml: {hist.nonpositive} nonpositive central values excluded", file=sys.stderr)
    out.emit(("V", "count", "gaussian_proxy"), hist.rows(), args.format, args.output)


def cmd_report(args):
    grid = list(args.X) if args.X else list(DEFAULT_X_GRID) + ([LONG_X] if args.long else [])
    grid = _x_grid(grid)
    top = max(grid) * (moments.PHI.support[1] if args.weight == "smooth" else 1)
    table = load_table(args, top) if any(k != 0 for k in args.k) else None
    reports = moments.magnitude_report(args.k, grid, table, args.weight)
    rows = [row for r in reports for row in r.rows()]
    out.emit(moments.REPORT_HEADER, rows, args.format, args.output, reports[0].metadata if reports else None)


COMMANDS = {
    "sieve": cmd_sieve,
    "lvalues": cmd_lvalues,
    "moments": cmd_moments,
    "charsum": cmd_charsum,
    "twisted": cmd_twisted,
    "mollify-verify": cmd_mollify_verify,
    "deviations": cmd_deviations,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except QMLError as exc:
        print(f"qml: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"qml: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
