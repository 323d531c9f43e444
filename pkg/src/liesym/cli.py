"""Command-line driver: load case files, run verification suites, emit reports."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from . import tables

SCHEMA = "liesym-report/1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    theorems: tuple
    cases: tuple | None
    checks: str = "both"
    seed: int = 0
    out: str | None = None
    fmt: str = "human"
    workers: int | None = None


def _selected_theorems(sel: str) -> tuple:
    sel = sel.lower()
    if sel == "all":
        return tuple(tables.THEOREMS.values())
    if sel not in tables.THEOREMS:
        raise UsageError(f"unknown theorem {sel!r}; choose from vf, log, power, all")
    return (tables.THEOREMS[sel],)


def make_config(args) -> RunConfig:
    theorems = _selected_theorems(args.theorem)
    reg = tables.registry()
    cases = None
    if args.cases and args.cases.lower() != "all":
        cases = tuple(c.strip() for c in args.cases.split(",") if c.strip())
        known = {c.case_id for th in theorems for c in reg[th]}
        bad = [c for c in cases if c not in known]
        if bad:
            raise UsageError(f"unknown case(s) {', '.join(bad)} for theorem {args.theorem}")
    if args.checks not in ("symbolic", "numeric", "both"):
        raise UsageError("--checks must be symbolic, numeric or both")
    return RunConfig(theorems, cases, args.checks, args.seed, args.out, args.format, args.workers)


def machine_report(cfg: RunConfig, reports) -> str:
    doc = {
        "schema": SCHEMA,
        "config": {"theorems": list(cfg.theorems), "cases": list(cfg.cases) if cfg.cases else "all",
                   "checks": cfg.checks, "seed": cfg.seed},
        "summary": {"verified": len(reports), "passed": sum(r.passed for r in reports),
                    "failed": sum(not r.passed for r in reports)},
        "reports": [r.as_dict() for r in reports],
    }
    return json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n"


def human_report(cfg: RunConfig, reports) -> str:
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status} {r.key:<24} dim {r.dimension}  signature {tuple(r.signature)}")
        for name, c in sorted(r.checks.items()):
            if not c.passed:
                lines.append(f"     {name}: {c.detail}")
    npass = sum(r.passed for r in reports)
    lines.append(f"{npass}/{len(reports)} case variants passed (seed {cfg.seed}, checks {cfg.checks})")
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> int:
    reports = tables.verify_all(cfg.theorems, cfg.cases, cfg.seed, cfg.checks, cfg.workers)
    text = machine_report(cfg, reports) if cfg.fmt == "machine" else human_report(cfg, reports)
    if cfg.out:
        try:
            with open(cfg.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"liesym: cannot write report: {exc}", file=sys.stderr)
            return EXIT_IO
        npass = sum(r.passed for r in reports)
        print(f"{npass}/{len(reports)} case variants passed; report written to {cfg.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _bounds(args) -> int:
    ok = True
    for th in _selected_theorems(args.theorem):
        rep = tables.verify_bounds(th)
        ok &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'} {th}: max dim {rep.max_dim} attained by case(s) "
              f"{', '.join(rep.attained_by)}")
        for v in rep.violations:
            print(f"     violation: {v}")
        for v in rep.conflicts:
            print(f"     known conflict: {v}")
    return EXIT_OK if ok else EXIT_FAIL


def _remarks(args) -> int:
    reps = tables.verify_remark_mappings(seed=args.seed)
    for r in reps:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.source} -> {r.target} [lam={r.lam}]: potential "
              f"{r.potential_mode}, delta ratio {r.delta_ratio}, bases {r.basis_detail}")
    return EXIT_OK if all(r.passed for r in reps) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liesym", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="verify classification cases")
    r.add_argument("--theorem", default="all", help="vf | log | power | all")
    r.add_argument("--cases", default="all", help="comma-separated case ids or 'all'")
    r.add_argument("--checks", default="both", help="symbolic | numeric | both")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=None, help="report path (default: stdout)")
    r.add_argument("--format", default="human", choices=("human", "machine"))
    r.add_argument("--workers", type=int, default=None, help="worker processes (1 = serial)")
    e = sub.add_parser("explain", help="print the dossier of one case")
    e.add_argument("theorem")
    e.add_argument("case")
    b = sub.add_parser("bounds", help="check dimension bounds and invariant ranges")
    b.add_argument("--theorem", default="all")
    m = sub.add_parser("remarks", help="check the maps onto t-dependent potentials")
    m.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "run":
            return run(make_config(args))
        if args.command == "explain":
            try:
                print(tables.explain(args.theorem, args.case))
            except KeyError as exc:
                raise UsageError(str(exc).strip("'\"")) from exc
            return EXIT_OK
        if args.command == "bounds":
            return _bounds(args)
        return _remarks(args)
    except UsageError as exc:
        print(f"liesym: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except tables.CaseFileError as exc:
        print(f"liesym: case file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"liesym: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
