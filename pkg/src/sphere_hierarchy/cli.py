"""Command-line interface.

Exit codes::

    0  success (solve: optimal; verify: certificate passes)
    1  parse, configuration or schema error
    2  solve: the level is infeasible (no finite bound)
    3  solver failure
    4  verify: certificate rejected
"""
import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import conic_ir
from .backends import BACKENDS, default_backend_name, get_backend
from .cones import Certificate, ConeKind, verify_certificate
from .hierarchy import (DEFAULT_SEED, FAILED, INFEASIBLE, OPTIMAL, LevelSpec, count_sequence,
                        run_table, sampled_minimum, solve_level)
from .polynomial import DimensionError, format_polynomial, parse_polynomial

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_REJECTED = 4

TABLE_COLUMNS = ["cone", "r", "bound", "status", "dual_bound", "N", "variables", "equalities",
                 "soc", "nonnegative", "p_star_hint", "solve_time"]
COUNT_COLUMNS = ["r", "N_paper", "N_h", "soc_blocks", "lp_rows", "dd_slacks", "gram_entries"]


class ConfigError(Exception):
    pass


def fmt_bound(x):
    """12 significant digits; infinities as -inf / inf."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return format(x, ".12g")


def _json_bound(x):
    s = fmt_bound(x)
    if s is None or s in ("nan", "-inf", "inf"):
        return s
    return float(s)


def _read_polynomial(args):
    if args.poly is None and args.file is None:
        raise ConfigError("give a polynomial with -p/--poly or -f/--file")
    if args.poly is not None and args.file is not None:
        raise ConfigError("use only one of -p/--poly and -f/--file")
    text = args.poly if args.poly is not None else Path(args.file).read_text()
    if args.n is None:
        raise ConfigError("-n (number of variables) is required")
    return parse_polynomial(text, args.n)


def _backend(args):
    name = args.backend or default_backend_name()
    if name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")
    options = {}
    if args.tol is not None:
        options = {"feastol": args.tol, "abstol": args.tol, "reltol": args.tol} if name == "cvxopt" \
            else {"tol": args.tol}
    return get_backend(name, **options)


def _emit(args, payload, human_lines, rows=None, columns=None):
    out = sys.stdout
    if args.format == "json":
        out.write(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    elif args.format == "csv":
        if rows is None:
            rows, columns = [payload], [k for k, v in payload.items() if not isinstance(v, (dict, list))]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
        out.write(buf.getvalue())
    else:
        out.write("\n".join(human_lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(args):
    p = _read_polynomial(args)
    if args.cone is None or len(args.cone) != 1:
        raise ConfigError("solve takes exactly one --cone")
    cone = ConeKind.parse(args.cone[0])
    spec = LevelSpec(p, cone, args.r)
    result = solve_level(spec, _backend(args))
    hint = sampled_minimum(p, seed=args.seed)
    cert_path = None
    if args.cert_out and result.certificate is not None:
        Path(args.cert_out).write_text(result.certificate.to_json() + "\n")
        cert_path = str(args.cert_out)
    ver = result.verification
    payload = {
        "command": "solve",
        "polynomial": format_polynomial(p),
        "n": p.n,
        "cone": cone.label,
        "r": args.r,
        "bound": _json_bound(result.bound),
        "status": result.status,
        "dual_bound": _json_bound(result.dual_bound),
        "p_star_hint": _json_bound(hint),
        "residual": ver.residual if ver else None,
        "cone_margin": ver.cone_margin if ver else None,
        "certificate": cert_path,
        "solver": result.solver,
        "program": result.program_stats,
        "solve_time": result.solve_time,
    }
    lines = [
        f"polynomial : {payload['polynomial']}",
        f"level      : {cone.label} r={args.r}",
        f"bound      : {fmt_bound(result.bound)}",
        f"status     : {result.status}",
        f"sampled min: {fmt_bound(hint)}",
    ]
    if ver is not None:
        lines.append(f"residual   : {ver.residual:.3e}  cone margin: {ver.cone_margin:.3e}")
    if cert_path:
        lines.append(f"certificate: {cert_path}")
    if result.message:
        lines.append(f"note       : {result.message}")
    _emit(args, payload, lines)
    if result.status == OPTIMAL:
        return EXIT_OK
    if result.status == INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _table_row(res):
    stats = res.program_stats or {}
    return {
        "cone": res.cone.label,
        "r": res.r,
        "bound": fmt_bound(res.bound),
        "status": res.status,
        "dual_bound": fmt_bound(res.dual_bound),
        "N": stats.get("N"),
        "variables": stats.get("variables"),
        "equalities": stats.get("equalities"),
        "soc": stats.get("soc"),
        "nonnegative": stats.get("nonnegative"),
        "p_star_hint": fmt_bound(res.p_star_hint),
        "solve_time": round(res.solve_time, 6),
    }


def cmd_table(args):
    p = _read_polynomial(args)
    cones = args.cone or ["dsos", "sdsos", "sos"]
    cones = [ConeKind.parse(c) for c in cones]
    if args.r_max is None:
        raise ConfigError("table needs --r-max")
    backend = _backend(args)
    results = run_table(p, cones, args.r_max, backend, seed=args.seed)
    rows = [_table_row(res) for res in results]
    payload = {
        "command": "table",
        "polynomial": format_polynomial(p),
        "n": p.n,
        "rows": [dict(row, bound=_json_bound(res.bound), dual_bound=_json_bound(res.dual_bound),
                      p_star_hint=_json_bound(res.p_star_hint))
                 for row, res in zip(rows, results)],
    }
    lines = [f"polynomial: {payload['polynomial']}",
             f"{'cone':<6} {'r':>2} {'bound':>20} {'status':<18} {'N':>5} {'soc':>6} {'time[s]':>9}"]
    for row in rows:
        lines.append(f"{row['cone']:<6} {row['r']:>2} {row['bound']:>20} {row['status']:<18} "
                     f"{row['N'] if row['N'] is not None else '':>5} "
                     f"{row['soc'] if row['soc'] is not None else '':>6} {row['solve_time']:>9.4f}")
    if rows:
        lines.append(f"sampled sphere minimum: {rows[0]['p_star_hint']}")
    _emit(args, payload, lines, rows=rows, columns=TABLE_COLUMNS)
    return EXIT_SOLVER if any(res.status == FAILED for res in results) else EXIT_OK


def cmd_verify(args):
    p = _read_polynomial(args)
    if not args.cert:
        raise ConfigError("verify needs --cert FILE")
    try:
        data = json.loads(Path(args.cert).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificate: {exc}") from exc
    _validate_certificate_schema(data)
    try:
        cert = Certificate.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad certificate: {exc}") from exc
    r = args.r if args.r is not None else cert.r
    gamma = args.gamma if args.gamma is not None else cert.gamma
    try:
        report = verify_certificate(p, r, gamma, cert)
    except DimensionError as exc:
        raise ConfigError(str(exc)) from exc
    payload = {
        "command": "verify",
        "polynomial": format_polynomial(p),
        "cone": cert.cone.label,
        "r": r,
        "gamma": gamma,
        "passed": report.passed,
        "residual": report.residual,
        "residual_tol": report.residual_tol,
        "cone_margin": report.cone_margin,
        "messages": report.messages,
    }
    lines = [f"{'PASS' if report.passed else 'FAIL'}: {cert.cone.label} certificate, r={r}, gamma={fmt_bound(gamma)}",
             f"residual   : {report.residual:.3e} (tolerance {report.residual_tol:.3e})",
             f"cone margin: {report.cone_margin:.3e}"] + report.messages
    _emit(args, payload, lines)
    return EXIT_OK if report.passed else EXIT_REJECTED


def _validate_certificate_schema(data):
    if not isinstance(data, dict):
        raise ConfigError("certificate must be a JSON object")
    required = {"cone": str, "N": int, "Q": list, "gamma": (int, float), "r": int}
    for key, typ in required.items():
        if key not in data:
            raise ConfigError(f"certificate is missing {key!r}")
        if not isinstance(data[key], typ) or isinstance(data[key], bool):
            raise ConfigError(f"certificate field {key!r} has the wrong type")
    if data["cone"] not in ("dsos", "sdsos", "sos"):
        raise ConfigError(f"unknown cone {data['cone']!r}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in data["Q"]):
        raise ConfigError("Q must be a list of numbers")
    blocks = data.get("blocks")
    if blocks is not None:
        if not isinstance(blocks, list):
            raise ConfigError("blocks must be a list")
        for b in blocks:
            if not isinstance(b, dict) or set(b) != {"i", "j", "a", "b", "c"}:
                raise ConfigError("each block needs exactly i, j, a, b, c")


def cmd_count(args):
    if args.n is None or args.d is None:
        raise ConfigError("count needs -n and -d")
    r_max = args.r_max if args.r_max is not None else (args.r if args.r is not None else 0)
    cone = ConeKind.parse(args.cone[0]) if args.cone else ConeKind.SDD
    rows = count_sequence(args.n, args.d, r_max, cone)
    payload = {"command": "count", "n": args.n, "d": args.d, "cone": cone.label,
               "rows": [{k: row[k] for k in COUNT_COLUMNS} for row in rows]}
    lines = [f"n={args.n} d={args.d} cone={cone.label}",
             f"{'r':>3} {'N_paper':>9} {'N_h':>7} {'soc_blocks':>11} {'lp_rows':>9}"]
    for row in rows:
        lines.append(f"{row['r']:>3} {row['N_paper']:>9} {row['N_h']:>7} {row['soc_blocks']:>11} {row['lp_rows']:>9}")
    _emit(args, payload, lines, rows=payload["rows"], columns=COUNT_COLUMNS)
    return EXIT_OK


def cmd_parse(args):
    p = _read_polynomial(args)
    text = format_polynomial(p)
    payload = {"command": "parse", "n": p.n, "canonical": text, "degree": p.degree,
               "homogeneous": p.is_homogeneous(), "terms": len(p.terms)}
    _emit(args, payload, [text])
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "table": cmd_table, "verify": cmd_verify,
            "count": cmd_count, "parse": cmd_parse}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sphere-hierarchy",
        description="DSOS / SDSOS / SOS lower bounds for forms on the unit sphere.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, poly=True):
        if poly:
            sp.add_argument("-p", "--poly", help="polynomial text, e.g. '(x1+x2+x3)^2'")
            sp.add_argument("-f", "--file", help="file containing the polynomial text")
        sp.add_argument("-n", type=int, help="number of variables")
        sp.add_argument("--cone", action="append",
                        help="dsos, sdsos or sos (repeat or comma-separate for table)")
        sp.add_argument("--r", type=int, default=None, help="hierarchy level")
        sp.add_argument("--r-max", dest="r_max", type=int, default=None, help="largest level")
        sp.add_argument("--backend", choices=sorted(BACKENDS), default=None,
                        help="solver backend (default: $SPHERE_HIERARCHY_BACKEND or cvxopt)")
        sp.add_argument("--format", choices=["human", "json", "csv"], default="human")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for sphere sampling")
        sp.add_argument("--tol", type=float, default=None, help="solver feasibility tolerance")

    sp = sub.add_parser("solve", help="solve one level")
    common(sp)
    sp.add_argument("--cert-out", dest="cert_out", help="write the certificate JSON here")
    sp = sub.add_parser("table", help="solve levels 0..r_max for several cones")
    common(sp)
    sp = sub.add_parser("verify", help="check a certificate file")
    common(sp)
    sp.add_argument("--cert", required=False, help="certificate JSON file")
    sp.add_argument("--gamma", type=float, default=None, help="override the certificate's gamma")
    sp = sub.add_parser("count", help="program sizes per level")
    common(sp, poly=False)
    sp.add_argument("-d", type=int, help="half degree of the form (degree 2d)")
    sp = sub.add_parser("parse", help="print the canonical expanded form")
    common(sp)
    return parser


def _split_cones(values):
    if not values:
        return values
    out = []
    for v in values:
        out += [c for c in v.split(",") if c]
    return out


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args.cone = _split_cones(args.cone)
    if args.command == "solve" and args.r is None:
        args.r = 0
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError, conic_ir.CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
