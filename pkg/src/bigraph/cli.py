"""``bigraph`` command-line front end.

Every subcommand writes one JSON document (``schema_version`` first-level
key) to stdout or to ``--out``; replication-based subcommands can also
write a CSV with one row per replication via ``--csv``. Floats are printed
with 17 significant digits so values re-parse bit for bit.

Exit codes: 0 success, 1 usage error, 2 validation or numeric error,
3 acceptance-suite failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import acceptance, branching, graphgen, harness, oracle, theory
from .errors import BigraphError, NumericError
from .params import ProbMatrix, as_type_counts, diagnose, ratio_instance, row_sum_instance, validate
from .rng import entropy_seed

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3
SCHEMA_VERSION = harness.SCHEMA_VERSION


class UsageError(Exception):
    pass


# --- output ---------------------------------------------------------------------


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v):
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return fmt_float(v)
    return v


def _write(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit(args, doc: dict, rows: Optional[list] = None, header: Optional[Sequence[str]] = None):
    doc = {"schema_version": SCHEMA_VERSION, "command": args.command, **doc}
    if rows is not None and args.csv:
        _write(_csv_text(rows, header), args.csv)
    if args.format == "csv":
        if rows is None:
            raise UsageError(f"'{args.command}' has no per-replication rows for --format csv")
        _write(_csv_text(rows, header), args.out)
    else:
        _write(dumps(doc) + "\n", args.out)


def _csv_text(rows: list, header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(r.get(h)) for h in header])
    return buf.getvalue()


def _flat_records(records: list) -> list:
    out = []
    for r in records:
        sL = r.get("sL") or [None, None]
        out.append({"rep": r["rep"], "seed": r["seed"], "L1": r["L1"], "L2": r["L2"],
                    "n_components": r["n_components"],
                    "L1_type1": r["L1_type"][0], "L1_type2": r["L1_type"][1],
                    "sL_type1": sL[0], "sL_type2": sL[1]})
    return out


SWEEP_HEADER = ("eps", "mean_L1_over_n", "mean_L2_over_n", "rho", "rho_eps")


# --- parsing --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _instance_args(p: argparse.ArgumentParser, ratio_default: Optional[float] = 0.5) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--n1", type=int, help="number of type-1 vertices")
    g.add_argument("--n2", type=int, help="number of type-2 vertices")
    g.add_argument("--p", type=float, help="one edge probability for every pair")
    g.add_argument("--p11", type=float)
    g.add_argument("--p12", type=float)
    g.add_argument("--p22", type=float)
    g.add_argument("--rows", type=float, help="common row sum of the expectation matrix")
    g.add_argument("--ratio", type=float, default=ratio_default,
                   help="mu21 / rows when building P from --rows (default %(default)s)")
    g.add_argument("--mu21", type=float, help="expected type-1 neighbours of a type-2 vertex")


def _output_args(p: argparse.ArgumentParser, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, help="master seed (drawn from OS entropy if unset)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--csv", help="also write per-replication rows to this CSV file")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--config", help="flat key=value file; flags given on the command line win")


def _workers_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $BIGRAPH_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bigraph", description="Two-type binomial random graphs and branching processes.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="survival probabilities, dual process and expected sizes")
    _instance_args(p)
    _output_args(p, seed=False)

    p = sub.add_parser("sample", help="sample one graph, or replicate a regime experiment")
    _instance_args(p)
    _output_args(p)
    _workers_arg(p)
    p.add_argument("--l1", type=float, help="large-component threshold for type 1")
    p.add_argument("--l2", type=float, help="large-component threshold for type 2")
    p.add_argument("--edges", help="write the edge list ('u v' per line) here")
    p.add_argument("--regime", choices=harness.REGIMES,
                   help="replicate and judge against this regime's largest-component law")
    p.add_argument("--eps", type=float, help="distance to criticality for --regime without P")
    p.add_argument("--reps", type=int, default=30)

    p = sub.add_parser("branching", help="simulate the branching process or estimate survival")
    _instance_args(p)
    _output_args(p)
    p.add_argument("--root-type", type=int, choices=(1, 2), default=1)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--threshold", type=float, help="total treated as survival")
    p.add_argument("--simulate", action="store_true", help="one run with the given caps")
    p.add_argument("--max-total", type=float, default=math.inf)
    p.add_argument("--width-cap", type=float, default=math.inf)
    p.add_argument("--max-generations", type=float, default=branching.DEFAULT_MAX_GENERATIONS)

    p = sub.add_parser("sweep", help="largest components along a grid of eps")
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--eps-grid", required=False, default="",
                   help="comma-separated eps values; P has row sums 1 + eps")
    p.add_argument("--reps", type=int, default=10)
    _output_args(p)
    _workers_arg(p)

    p = sub.add_parser("sprinkle", help="two-round exposure against direct sampling")
    _instance_args(p)
    _output_args(p)
    _workers_arg(p)
    p.add_argument("--reps", type=int, default=200)

    p = sub.add_parser("sL", help="Monte Carlo mean of s_{i,L}")
    _instance_args(p)
    _output_args(p)
    _workers_arg(p)
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--reps", type=int, default=30)

    p = sub.add_parser("oracle", help="exact distribution by enumerating every edge subset")
    _instance_args(p)
    _output_args(p, seed=False)
    p.add_argument("--statistic", choices=oracle.STATISTICS, default="L1")
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", help="fewer replications, no runtime limits")
    p.add_argument("--only", default="", help="comma-separated criterion numbers")
    p.add_argument("--seed", type=int, default=0, help="master seed of the suite (default 0)")
    p.add_argument("--timing", action="store_true", help="include timings in the output")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--config")
    return parser


def read_config(path: str) -> list:
    """Flat ``key = value`` lines -> argv tokens. ``#`` starts a comment."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            low = value.lower()
            if low in ("true", "yes", "on"):
                tokens.append(flag)
            elif low in ("false", "no", "off"):
                continue
            else:
                tokens.extend([flag, value])
    return tokens


def _with_config(argv: list) -> list:
    if not argv or "--config" not in argv[1:]:
        return argv
    i = argv.index("--config", 1)
    if i + 1 >= len(argv):
        raise UsageError("--config needs a path")
    # config tokens go first so later command-line flags override them
    return [argv[0]] + read_config(argv[i + 1]) + argv[1:]


def _type_counts(args):
    if args.n1 is None or args.n2 is None:
        raise UsageError("--n1 and --n2 are required")
    return as_type_counts((args.n1, args.n2))


def _instance(args, required: bool = True):
    n = _type_counts(args)
    entries = (args.p11, args.p12, args.p22)
    if args.p is not None:
        P = ProbMatrix(np.full((2, 2), args.p))
    elif all(x is not None for x in entries):
        P = ProbMatrix([[args.p11, args.p12], [args.p12, args.p22]])
    elif args.rows is not None:
        if args.mu21 is not None:
            P = row_sum_instance(n, args.rows, args.mu21)
        else:
            P = ratio_instance(n, args.rows, args.ratio)
    elif required:
        raise UsageError("give --p, all of --p11/--p12/--p22, or --rows with --ratio or --mu21")
    else:
        return n, None
    validate(P, n)
    return n, P


def _seed(args) -> int:
    if args.seed is None:
        args.seed = entropy_seed()
        print(f"seed={args.seed}", file=sys.stderr)
    return int(args.seed)


def _thresholds(args):
    if args.l1 is None and args.l2 is None:
        return None
    if args.l1 is None or args.l2 is None:
        raise UsageError("give both --l1 and --l2")
    return (args.l1, args.l2)


# --- subcommands ----------------------------------------------------------------


def cmd_solve(args):
    n, P = _instance(args)
    M = validate(P, n)
    rep = diagnose(M, n)
    sol = theory.solve_survival(M, n)
    doc = {"n": n.tolist(), "P": P.tolist(), "mu": M.tolist(), **rep.as_dict(),
           "rho": list(sol.rho), "residual": list(sol.residual), "iterations": sol.iterations}
    if rep.epsilon > 0:
        D = theory.dual_matrix(P, sol, n)
        doc["dual"] = D.as_dict()
        try:
            doc["dual_expectations"] = theory.expected_dual_sizes(D).e.tolist()
        except NumericError as e:
            doc["dual_expectations"] = None
            doc["dual_error"] = str(e)
    else:
        try:
            doc["expected_sizes"] = theory.expected_primal_sizes(M).e.tolist()
        except NumericError as e:
            doc["expected_sizes"] = None
            doc["expected_sizes_error"] = str(e)
    if rep.epsilon > 0:
        doc["rho_eps"] = theory.rho_epsilon(rep.epsilon)
        doc["two_eps"] = 2.0 * rep.epsilon
    _emit(args, doc)


def cmd_sample(args):
    if args.regime:
        n, P = _instance(args, required=args.eps is None)
        seed = _seed(args)
        report = harness.run_regime(args.regime, n, P, eps=args.eps, ratio=args.ratio,
                                    reps=args.reps, master_seed=seed, workers=args.workers)
        rows = _flat_records(report.records)
        _emit(args, report.to_dict(), rows, harness.CSV_HEADER)
        return EXIT_OK
    n, P = _instance(args)
    seed = _seed(args)
    G = graphgen.sample(n, P, seed)
    st = graphgen.components(G, _thresholds(args))
    if args.edges:
        with open(args.edges, "w", encoding="utf-8") as fh:
            graphgen.write_edge_list(G, fh)
    doc = {"n": n.tolist(), "P": P.tolist(), "seed": seed, "edges": G.m,
           "L1": st.L1, "L2": st.L2, "n_components": st.n_components,
           "L1_per_type": st.per_type[0].tolist() if st.n_components else [0, 0],
           "sL": None if st.s_L is None else st.s_L.tolist()}
    _emit(args, doc)
    return EXIT_OK


def cmd_branching(args):
    n, P = _instance(args)
    seed = _seed(args)
    root = args.root_type - 1
    M = validate(P, n)
    rho = theory.solve_survival(M, n).rho
    doc = {"n": n.tolist(), "P": P.tolist(), "seed": seed, "root_type": args.root_type,
           "rho": list(rho)}
    if args.simulate:
        caps = branching.StopConfig(width_cap=args.width_cap, max_total=args.max_total,
                                    max_generations=args.max_generations)
        out = branching.simulate(root, n, P, caps, seed)
        doc.update({"totals": list(out.totals), "width": out.width,
                    "generations": out.generations, "stop": out.stop.value})
    else:
        est = branching.estimate_survival(root, n, P, args.threshold, args.reps, seed)
        doc.update({"estimate": est.value, "stderr": est.stderr, "reps": est.reps,
                    "threshold": est.threshold, "within_3se": est.within(rho[root])})
    _emit(args, doc)


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"bad number list {text!r}") from e


def cmd_sweep(args):
    n = _type_counts(args)
    grid = _float_list(args.eps_grid)
    seed = _seed(args)
    table = harness.sweep_epsilon(grid, n, args.ratio, args.reps, seed, workers=args.workers)
    doc = {"n": n.tolist(), "ratio": args.ratio, "reps": args.reps, "master_seed": seed,
           "table": table, "inversions": harness.sweep_inversions(table)}
    _emit(args, doc, table, SWEEP_HEADER)


def cmd_sprinkle(args):
    n, P = _instance(args)
    seed = _seed(args)
    report = harness.two_round_exposure(n, P, seed, args.reps, workers=args.workers)
    doc = report.to_dict()
    doc.pop("extra", None)
    doc["merged"] = report.extra["merged"]
    doc["direct_L1"] = [r["L1"] for r in report.extra["direct_records"]]
    _emit(args, doc, _flat_records(report.records), harness.CSV_HEADER)


def cmd_sL(args):
    n, P = _instance(args)
    seed = _seed(args)
    L = _thresholds(args)
    if L is None:
        L = harness.make_sprinkle(n, P).l
    out = harness.estimate_sL(n, P, L, args.reps, seed, workers=args.workers)
    records = out.pop("records")
    doc = {"n": n.tolist(), "P": P.tolist(), "master_seed": seed, **out}
    _emit(args, doc, _flat_records(records), harness.CSV_HEADER)


def cmd_oracle(args):
    n, P = _instance(args)
    dist = oracle.enumerate_exact(n, P, args.statistic, _thresholds(args), args.root)
    doc = {"n": n.tolist(), "P": P.tolist(), "statistic": args.statistic,
           "support": [[v, p] for v, p in dist.support], "mean": dist.mean,
           "variance": dist.variance}
    _emit(args, doc)


def cmd_verify(args):
    only = None
    if args.only:
        try:
            only = sorted({int(x) for x in args.only.split(",") if x.strip()})
        except ValueError as e:
            raise UsageError(f"bad criterion list {args.only!r}") from e
        if any(not 1 <= k <= 12 for k in only):
            raise UsageError("criteria are numbered 1 to 12")
    results = acceptance.run_suite(quick=args.quick, seed=args.seed, only=only,
                                   echo=lambda s: print(s, flush=True))
    doc = {"schema_version": SCHEMA_VERSION, "command": "verify", "quick": args.quick,
           "master_seed": args.seed,
           "passed": all(r.passed for r in results),
           "results": [r.to_dict(args.timing) for r in results]}
    if args.out:
        _write(dumps(doc) + "\n", args.out)
    if args.timing:
        for r in results:
            print(f"criterion {r.number}: {r.seconds:.2f} s (limit {r.limit})", file=sys.stderr)
    return EXIT_OK if doc["passed"] else EXIT_VERIFY


COMMANDS = {
    "solve": cmd_solve,
    "sample": cmd_sample,
    "branching": cmd_branching,
    "sweep": cmd_sweep,
    "sprinkle": cmd_sprinkle,
    "sL": cmd_sL,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_with_config(argv))
        if getattr(args, "format", "json") == "csv" and args.command in ("solve", "oracle"):
            raise UsageError(f"'{args.command}' only writes JSON")
        code = COMMANDS[args.command](args)
        return EXIT_OK if code is None else code
    except UsageError as e:
        print(f"bigraph: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BigraphError, ValueError, ArithmeticError) as e:
        print(f"bigraph: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"bigraph: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)


def main() -> None:
    sys.exit(dispatch())
