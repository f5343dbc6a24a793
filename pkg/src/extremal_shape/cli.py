"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ExtremalShapeError, NumericalFailureError
from .fields import read_field_csv, write_field_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
OUT_ENV = "EXTREMAL_SHAPE_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_p_values(text: str) -> list[float]:
    """'3', '2,2.5,4' or an inclusive range 'start:step:end'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected start:step:end, got {text!r}")
        start, step, end = (float(x) for x in parts)
        if step <= 0 or end < start:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        n = int(math.floor((end - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(n)]
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad exponent list {text!r}") from exc


def _problem_args(p: argparse.ArgumentParser, p_required=False) -> None:
    p.add_argument("--config", help="JSON file with problem fields; flags override it")
    p.add_argument("--domain", choices=["disc", "ball", "annulus", "interval"])
    p.add_argument("--N", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--p", type=parse_p_values, required=p_required, help="value, list, or start:step:end")
    p.add_argument("--subspace", choices=["full", "antisym", "antisymmetric", "dirichlet-half"])
    p.add_argument("--mr", type=int)
    p.add_argument("--mtheta", type=int)
    p.add_argument("--tol-quotient", type=float)
    p.add_argument("--tol-residual", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="out")


_FLAG_TO_FIELD = {
    "domain": "domain",
    "N": "N",
    "rho": "rho",
    "subspace": "subspace",
    "mr": "M_r",
    "mtheta": "M_theta",
    "tol_quotient": "tol_quotient",
    "tol_residual": "tol_residual",
    "max_iters": "max_iters",
    "seed": "seed",
}


def _spec_fields(args) -> dict:
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data.update(json.load(fh))
    for flag, name in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            data[name] = v
    if data.get("domain") == "ball" and data.get("N") is None:
        data["N"] = 3
    return data


def _spec(args, p=None):
    from .solver import ProblemSpec

    data = _spec_fields(args)
    if p is not None:
        data["p"] = p
    return ProblemSpec.from_dict(data)


def _out_dir(args) -> Path:
    out = Path(os.environ.get(OUT_ENV) or args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, record) -> None:
    path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")


def _report(u, p):
    from .diagnostics import full_report
    from .oracles import oddness_defect

    if u.grid.kind == "interval":
        return {"p": float(p), "oddness_defect": oddness_defect(u)}
    return full_report(u, p).to_dict()


def cmd_solve(args) -> int:
    from .solver import minimize

    ps = args.p or [None]
    if len(ps) != 1:
        raise ExtremalShapeError("solve takes a single exponent; use sweep for several")
    spec = _spec(args, ps[0])
    out = _out_dir(args)
    res = minimize(spec)
    _dump(out / "result.json", res.to_dict())
    write_field_csv(res.u, out / "field.csv")
    _dump(out / "report.json", {"config": spec.to_dict(), "report": _report(res.u, spec.p)})
    print(f"Lambda = {res.Lambda:.12g}  residual = {res.residual_l2:.3e}  converged = {res.converged}")
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def _solve_entry(spec):
    from .solver import minimize

    # plain records: results hold factorizations that do not pickle
    return minimize(spec).to_dict(include_trace=False)


def cmd_sweep(args) -> int:
    from .solver import sweep_p

    if not args.p:
        raise ExtremalShapeError("sweep needs --p")
    specs = [_spec(args, p) for p in args.p]
    out = _out_dir(args)
    if args.jobs > 1:
        # independent starts, so entries do not depend on each other
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_solve_entry, specs))
    else:
        records = [r.to_dict(include_trace=False) for r in sweep_p(specs[0], args.p)]
    with open(out / "sweep.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    for rec in records:
        print(f"p = {rec['config']['p']:<8g} Lambda = {rec['Lambda']:.12g}  converged = {rec['converged']}")
    return EXIT_OK if all(rec["converged"] for rec in records) else EXIT_NUMERICAL


def cmd_find_break(args) -> int:
    from .solver import find_antisymmetry_break

    spec = _spec(args, 2.0)
    out = _out_dir(args)
    try:
        res = find_antisymmetry_break(spec, p_lo=args.p_lo, p_hi=args.p_hi, gap_tol=args.gap_tol,
                                      p_tol=args.p_tol, n_random=args.n_random)
    except NumericalFailureError as exc:
        _dump(out / "break.json", {"config": spec.to_dict(), "error": str(exc), "table": exc.trace})
        raise
    _dump(out / "break.json", {"config": spec.to_dict(), **res.to_dict()})
    print(f"p* = {res.p_star:.6g}  bracket = [{res.bracket[0]:.6g}, {res.bracket[1]:.6g}]")
    print(f"{'p':>10} {'Lambda':>14} {'Lambda_as':>14} {'gap':>12}")
    for row in res.table:
        print(f"{row['p']:>10.5g} {row['Lambda']:>14.10g} {row['Lambda_antisym']:>14.10g} {row['gap']:>12.4e}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from . import oracles

    out = _out_dir(args)
    N = args.N if args.N is not None else 2
    if args.mode in ("ball", "annulus"):
        if args.mode == "ball":
            mode = oracles.neumann_mode_ball(N)
        else:
            mode = oracles.neumann_mode_annulus(N, args.rho if args.rho is not None else 0.5)
        mode.to_csv(out / "profile.csv")
        record = mode.to_dict()
        print(f"Lambda_2 = {mode.Lambda:.12g}")
    elif args.mode == "interval":
        p = args.p[0] if args.p else 2.0
        res = oracles.interval_extremal(p, M=args.mr or 256, seed=args.seed or 0)
        write_field_csv(res.u, out / "field.csv")
        record = res.to_dict()
        print(f"Lambda = {res.Lambda:.12g}  oddness_defect = {res.oddness_defect:.3e}")
    else:
        record = {"N": N, "S": oracles.sobolev_constant(N), "bound": oracles.critical_bound(N)}
        print(f"S = {record['S']:.12g}  S / 2^(2/N) = {record['bound']:.12g}")
    _dump(out / "oracle.json", {"mode": args.mode, **record})
    return EXIT_OK


def cmd_instanton(args) -> int:
    from .oracles import InstantonSpec, critical_bound, instanton_quotient

    N = args.N if args.N is not None else 3
    out = _out_dir(args)
    bound = critical_bound(N)
    rows = []
    for eps in args.eps:
        q = instanton_quotient(InstantonSpec(N=N, eps=eps, resolution=args.resolution))
        rows.append({"eps": eps, "quotient": q, "bound": bound, "deficit": (bound - q) / bound})
        print(f"eps = {eps:<8g} quotient = {q:.12g}  bound = {bound:.12g}  deficit = {rows[-1]['deficit']:+.4e}")
    _dump(out / "instanton.json", {"N": N, "resolution": args.resolution, "rows": rows})
    return EXIT_OK


def cmd_check(args) -> int:
    from .solver import ProblemSpec

    field_path = Path(args.field)
    data = {}
    sibling = field_path.with_name("result.json")
    if sibling.exists():
        data.update(json.loads(sibling.read_text())["config"])
    data.update(_spec_fields(args))
    if args.p:
        data["p"] = args.p[0]
    spec = ProblemSpec.from_dict(data)
    u = read_field_csv(field_path, spec.build_grid())
    out = _out_dir(args)
    _dump(out / "report.json", {"config": spec.to_dict(), "report": _report(u, spec.p)})
    print(json.dumps(_report(u, spec.p), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="extremal-shape", description="Extremals of the zero-average Sobolev quotient.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="minimize at one exponent")
    _problem_args(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="minimize over a list of exponents")
    _problem_args(s, p_required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("find-break", help="locate the exponent where antisymmetry is lost (disc)")
    _problem_args(s)
    s.add_argument("--p-lo", type=float, default=2.0)
    s.add_argument("--p-hi", type=float, default=64.0)
    s.add_argument("--gap-tol", type=float, default=1e-6)
    s.add_argument("--p-tol", type=float, default=0.05)
    s.add_argument("--n-random", type=int, default=3)
    s.set_defaults(func=cmd_find_break)

    s = sub.add_parser("oracle", help="reference solutions")
    _problem_args(s)
    s.add_argument("--mode", choices=["ball", "annulus", "interval", "sobolev"], default="ball")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("instanton", help="boundary bubble quotient against the critical bound")
    _problem_args(s)
    s.add_argument("--eps", type=parse_p_values, default=[0.05, 0.02, 0.01])
    s.add_argument("--resolution", type=int, default=24)
    s.set_defaults(func=cmd_instanton)

    s = sub.add_parser("check", help="recompute diagnostics for a saved field")
    s.add_argument("field")
    _problem_args(s)
    s.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ExtremalShapeError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
