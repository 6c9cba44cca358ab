"""Command line entry point: ``ricci-forge run|oracle|families``."""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import report as rp
from .errors import ExpressionError, MathError, NotFoundError, RicciForgeError
from .scenario import ScenarioError, load
from .solutions import family_info, list_families
from .tasks import run

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MATH = 0, 1, 2, 3


def _diagnostic(kind: str, err: Exception, **extra) -> str:
    doc = {"error": kind, "type": type(err).__name__, "message": str(err), **extra}
    return json.dumps(rp.clean(doc), sort_keys=True)


def _run(args, oracle: bool) -> int:
    try:
        scenarios = load(args.scenario)
    except OSError as err:
        print(_diagnostic("input", err), file=sys.stderr)
        return EXIT_INPUT
    except (ScenarioError, ExpressionError) as err:
        print(_diagnostic("validation", err, pointer=err.pointer), file=sys.stderr)
        return EXIT_INPUT
    reports = []
    for i, sc in enumerate(scenarios):
        seed = args.seed if args.seed is not None else (sc.seed if sc.seed is not None else 0)
        start = time.perf_counter()
        try:
            rep = run(sc, seed, args.tol, oracle)
        except ScenarioError as err:
            print(_diagnostic("validation", err, pointer=err.pointer, scenario=i), file=sys.stderr)
            return EXIT_INPUT
        except MathError as err:
            print(_diagnostic("math", err, point=err.point, scenario=i), file=sys.stderr)
            return EXIT_MATH
        except RicciForgeError as err:
            print(_diagnostic("input", err, scenario=i), file=sys.stderr)
            return EXIT_INPUT
        if not args.deterministic:
            rep.timing = time.perf_counter() - start
        reports.append(rep)
        if not args.quiet:
            print(rp.render_text(rep))
    if args.out:
        path = rp.write(reports, args.out)
        if not args.quiet:
            print(f"report written to {path}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _families(args) -> int:
    if args.tag:
        try:
            doc = family_info(args.tag)
        except NotFoundError as err:
            print(_diagnostic("not-found", err), file=sys.stderr)
            return EXIT_INPUT
    else:
        doc = list_families()
    print(json.dumps(doc, sort_keys=True, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ricci-forge",
                                 description="Verify prescribed partial Ricci curvature constructions "
                                             "and variational formulas for mixed scalar curvature.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a scenario file (object or array of objects)"),
                           ("oracle", "run a scenario on the finite-difference path only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("scenario")
        p.add_argument("--out", help="directory for report.json and CSV tables")
        p.add_argument("--seed", type=int, help="seed for all random sampling (overrides the file)")
        p.add_argument("--deterministic", action="store_true",
                       help="serial execution, no timing in the report (byte-stable output)")
        p.add_argument("--tol", type=float, help="override the pointwise tolerance")
        p.add_argument("--quiet", action="store_true")
    f = sub.add_parser("families", help="list built-in solution families")
    f.add_argument("tag", nargs="?")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "families":
        return _families(args)
    return _run(args, oracle=args.command == "oracle")


if __name__ == "__main__":
    sys.exit(main())
