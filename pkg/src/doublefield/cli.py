"""Command line entry point: ``doublefield run|suite|bracket|...``."""

from __future__ import annotations

import argparse
import json
import sys

from .scenario import ScenarioError, apply_overrides, build_scenario, run_scenario, run_tasks

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

# subcommand -> scenario task
_DIRECT = {
    "bracket": "bracket",
    "star": "star",
    "lie": "lie",
    "torsion": "torsion",
    "curvature": "curvature",
    "scalar": "scalar-curvature",
    "action": "action",
    "dirac": "dirac",
}


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _suite_json(results, level, seed, code) -> str:
    doc = {
        "level": level,
        "seed": seed,
        "checks": [r.as_dict() for r in results],
        "status": "PASS" if code == 0 else "FAIL",
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _suite_text(results, code) -> str:
    w = max(len(r.label) for r in results)
    lines = [f"{'identity':<{w}}  {'status':<6} {'count':>5}  {'residual':<10}  time"]
    for r in results:
        lines.append(f"{r.label:<{w}}  {r.status():<6} {r.count:>5}  {r.residual:<10}  {r.seconds:.2f}s")
    failed = [r.label for r in results if not (r.passed or r.expected_fail)]
    lines.append("overall: PASS" if code == 0 else "overall: FAIL (" + ", ".join(failed) + ")")
    return "\n".join(lines) + "\n"


def _cmd_suite(args) -> int:
    from .suite import run_identity_suite

    results, code = run_identity_suite(args.level, args.seed, corrupt_bracket=args.corrupt_bracket or None)
    text = _suite_json(results, args.level, args.seed, code) if args.format == "json" \
        else _suite_text(results, code)
    _emit(text, args.out)
    if code:
        failed = [r.label for r in results if not (r.passed or r.expected_fail)]
        print("identity violations: " + ", ".join(failed), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    report, code, err = run_scenario(args.scenario, args.set)
    if report is None:
        print(f"error: {err}", file=sys.stderr)
        return code
    _emit(report.to_json() if args.format == "json" else report.to_text(), args.out)
    return code


def _field_doc(args) -> dict:
    doc = {"m": args.m, "seed": args.seed, "field": {}}
    if args.random_field:
        doc["field"] = {"random": True, "degree": args.degree}
    for key in ("g", "B", "phi"):
        v = getattr(args, key)
        if v is not None:
            doc["field"][key] = v
    if args.point:
        doc["field"]["reference_point"] = args.point.split(",")
    return doc


def _cmd_direct(args) -> int:
    task_name = _DIRECT[args.command]
    doc = _field_doc(args)
    task_args = {}
    for k in ("X", "Y", "Z"):
        v = getattr(args, k, None)
        if v is not None:
            task_args[k] = v
    if getattr(args, "connection", None):
        task_args["connection"] = args.connection
    if getattr(args, "order", None):
        task_args["order"] = args.order
    if getattr(args, "domain", None):
        doc["quadrature"] = {"domain": [list(map(str, iv.split(","))) for iv in args.domain.split(";")]}
    if args.command == "dirac":
        doc["dirac"] = {"D": {"kind": args.kind, "data": args.data if args.kind != "span"
                              else [v for v in args.data.split(";")]}}
        task_args["name"] = "D"
    task = {"task": task_name}
    if task_args:
        task["args"] = task_args
    doc["tasks"] = [task]
    try:
        sc = build_scenario(apply_overrides(doc, args.set))
        report = run_tasks(sc)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _emit(report.to_json() if args.format == "json" else report.to_text(), args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--out", help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="doublefield", description="Geometry of flat para-Kahler double manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a YAML scenario")
    p.add_argument("scenario")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a scenario entry")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("suite", parents=[common], help="run the identity suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-bracket", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_suite)

    fieldargs = argparse.ArgumentParser(add_help=False)
    fieldargs.add_argument("--m", type=int, default=2)
    fieldargs.add_argument("--g", help='metric on L as "a,b;c,d"')
    fieldargs.add_argument("--B", help="2-form on L, same format")
    fieldargs.add_argument("--phi", help="dilaton expression")
    fieldargs.add_argument("--point", help="comma separated evaluation / reference point")
    fieldargs.add_argument("--random-field", action="store_true", help="use a seeded random level-matched field")
    fieldargs.add_argument("--degree", type=int, default=1)
    fieldargs.add_argument("--seed", type=int, default=0)
    fieldargs.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    for name in ("bracket", "star", "lie"):
        p = sub.add_parser(name, parents=[common, fieldargs])
        p.add_argument("--X", required=True, help="comma separated components or e0..e{2m-1}")
        p.add_argument("--Y", required=True)
        p.set_defaults(func=_cmd_direct)
    for name in ("torsion", "curvature", "scalar", "action"):
        p = sub.add_parser(name, parents=[common, fieldargs])
        p.add_argument("--connection", choices=("vtc", "cwt"), default="vtc")
        if name == "torsion":
            for k in ("X", "Y", "Z"):
                p.add_argument(f"--{k}")
        if name == "action":
            p.add_argument("--order", type=int)
            p.add_argument("--domain", help='box as "lo,hi;lo,hi;..."')
        p.set_defaults(func=_cmd_direct)
    p = sub.add_parser("dirac", parents=[common, fieldargs])
    p.add_argument("--kind", choices=("span", "two_form", "bivector", "isometry"), required=True)
    p.add_argument("--data", required=True, help='matrix "a,b;c,d", or for span one vector per ";"-group')
    p.set_defaults(func=_cmd_direct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
