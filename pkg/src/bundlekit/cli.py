"""``bundlekit`` command line.

Exit codes: 0 all checks pass, 1 some check fails, 2 usage or spec/schema
error, 3 internal error.  Human output is always rendered from the same JSON
document that ``--json`` prints and ``--out`` writes.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__, catalog
from .bundle import DEFAULT_TOL, check_gauge, check_section, validate_cocycle
from .connection import validate_connection
from .geometry import DEFAULT_SAMPLES, DEFAULT_SEED, validate_atlas
from .invariants import DEFAULT_RESOLUTION, InvariantError, chern_number, field_csv, full_report
from .report import _clean, dumps, tool_info
from .specfile import SpecError, load
from .transport import DEFAULT_STEP, parallel_transport_vector, transport_frame

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.3e}" if isinstance(x, float) else str(x)


def render_reports(reports: list) -> list[str]:
    lines = []
    for rep in reports:
        lines.append(f"{rep['subject']}: {rep['status']}")
        for c in rep["checks"]:
            line = (f"  {c['name']:<20} {c['status']}  residual {_fmt(c['residual'])}"
                    f"  (tol {_fmt(c['tolerance'])})")
            if c["status"] == "FAIL" and c.get("worst"):
                w = c["worst"]
                coords = ", ".join(f"{k}={v:.6g}" for k, v in w["coordinates"].items())
                where = f" chart {w['chart']} ({coords})"
                tri = c.get("detail", {}).get("triple")
                if tri:
                    where += f" triple {','.join(tri)}"
                line += where
            lines.append(line)
    return lines


def _mat(m: dict) -> str:
    re, im = np.asarray(m["re"]), np.asarray(m["im"])
    z = re + 1j * im
    if not np.any(im):
        z = re
    return np.array2string(z, precision=10, suppress_small=True).replace("\n", " ")


def render(doc: dict) -> str:
    kind = doc.get("command")
    lines = []
    if kind in ("validate", "report"):
        lines.append(f"{doc['spec']}: {doc['status']}")
        lines += render_reports(doc["reports"])
        comp = doc.get("computations", {})
        for name, m in comp.get("loopClass", {}).items():
            lines.append(f"loop_class {name}: {_mat(m)}")
        for name, t in comp.get("transport", {}).items():
            label = "holonomy" if t["closed"] else "transport"
            lines.append(f"{label} {name} [{t['chart']}]: {_mat(t['value'])}")
        if "chern" in comp:
            c = comp["chern"]
            lines.append(f"chern: {c['nearest']} (raw {c['raw']:.12f}, deviation "
                         f"{c['deviation']:.2e}) {c['status']}")
        if "totalCurvature" in comp:
            t = comp["totalCurvature"]
            lines.append(f"total curvature: {t['value']:.12f} (4pi {t['expected']:.12f}) "
                         f"{t['status']}")
        for e in doc.get("errors", []):
            lines.append(f"{e['name']}: FAIL {e['error']}")
    elif kind == "transport":
        r = doc["result"]
        lines.append(f"{doc['curve']}: {r['kind']} in chart {r['chart']} "
                     f"({r['integrator']['steps']} RK4 steps)")
        lines.append(f"  value: {_mat(r['value'])}")
        for ev in r["itinerary"]:
            if ev["event"] == "switch":
                lines.append(f"  t={ev['t']:.6g}: {ev['from']} -> {ev['to']}, "
                             f"g = {_mat(ev['transition'])}")
    elif kind == "chern":
        c = doc["chern"]
        lines.append(f"{doc['spec']}: chern {c['nearest']} (raw {c['raw']:.12f}, deviation "
                     f"{c['deviation']:.2e}, {c['resolution']}x{c['resolution']}) {c['status']}")
        for ch, v in c["perChart"].items():
            lines.append(f"  chart {ch}: {v:.12f}")
    elif kind == "catalog-list":
        for e in doc["entries"]:
            lines.append(f"{e['name']:<22} [{e['atlas']}] {e['description']}")
    else:
        return dumps(doc)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _emit(args, doc: dict):
    text = dumps(doc)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text if getattr(args, "json", False) else render(doc))


def cmd_validate(args) -> int:
    spec = load(args.spec)
    reps = [validate_atlas(spec.atlas, args.samples, args.seed),
            validate_cocycle(spec.bundle, args.samples, args.seed, args.tol)]
    reps += [check_section(spec.bundle, s, args.samples, args.seed, args.tol)
             for s in spec.sections]
    reps += [check_gauge(spec.bundle, g, args.samples, args.seed, args.tol)
             for g in spec.gauge_transformations]
    if spec.connection is not None:
        reps.append(validate_connection(spec.connection, args.samples, args.seed,
                                        max(args.tol, 1e-8)))
    ok = all(r.passed for r in reps)
    doc = {"command": "validate", "tool": tool_info(), "spec": spec.name,
           "status": "PASS" if ok else "FAIL", "samples": args.samples, "seed": args.seed,
           "reports": [r.to_dict() for r in reps]}
    _emit(args, doc)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_transport(args) -> int:
    spec = load(args.spec)
    if spec.connection is None:
        raise UsageError(f"{spec.name} has no connection")
    if args.curve not in spec.curves:
        known = ", ".join(sorted(spec.curves)) or "none"
        raise UsageError(f"unknown curve {args.curve!r} (declared: {known})")
    curve = spec.curves[args.curve]
    v0 = args.v0 if args.v0 is not None else spec.curve_v0.get(args.curve)
    if v0 is not None:
        res = parallel_transport_vector(spec.connection, curve, v0, args.step)
    else:
        res = transport_frame(spec.connection, curve, args.step, project=args.project)
    doc = _clean({"command": "transport", "tool": tool_info(), "spec": spec.name,
                  "curve": args.curve, "step": args.step, "result": res.to_dict()})
    _emit(args, doc)
    return EXIT_PASS


def cmd_chern(args) -> int:
    spec = load(args.spec)
    if spec.connection is None:
        raise UsageError(f"{spec.name} has no gauge field")
    try:
        rep = chern_number(spec.connection, args.resolution)
    except InvariantError as exc:
        raise UsageError(str(exc)) from None
    doc = {"command": "chern", "tool": tool_info(), "spec": spec.name, "chern": rep.to_dict()}
    _emit(args, doc)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_report(args) -> int:
    spec = load(args.spec)
    doc = full_report(spec, args.samples, args.seed, args.tol, args.step, args.resolution,
                      args.threads)
    doc = {"command": "report", **doc}
    if args.csv:
        try:
            text = field_csv(spec)
        except InvariantError as exc:
            raise UsageError(str(exc)) from None
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    _emit(args, doc)
    return EXIT_PASS if doc["status"] == "PASS" else EXIT_FAIL


def cmd_catalog(args) -> int:
    if args.action == "list":
        doc = {"command": "catalog-list", "entries": catalog.listing()}
    else:
        if not args.name:
            raise UsageError("catalog show needs a name")
        try:
            doc = catalog.get(args.name)
        except catalog.CatalogError as exc:
            raise UsageError(str(exc)) from None
    _emit(args, doc)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bundlekit",
                                description="Fiber bundles with connections from local data.")
    p.add_argument("--version", action="version", version=f"bundlekit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sampling=True):
        sp.add_argument("spec", help="spec file path or catalog:NAME")
        sp.add_argument("--out", help="also write the JSON document to this file")
        sp.add_argument("--json", action="store_true", help="print JSON instead of text")
        if sampling:
            sp.add_argument("--samples", type=_positive_int, default=DEFAULT_SAMPLES)
            sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
            sp.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)

    sp = sub.add_parser("validate", help="cocycle, section, gauge and connection laws")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("transport", help="parallel transport along a declared curve")
    common(sp, sampling=False)
    sp.add_argument("--curve", required=True)
    sp.add_argument("--step", type=_positive_float, default=DEFAULT_STEP)
    sp.add_argument("--v0", type=float, nargs="+", help="transport this vector, not the frame")
    sp.add_argument("--project", action="store_true",
                    help="project the frame onto the group every 100 steps")
    sp.set_defaults(func=cmd_transport)

    sp = sub.add_parser("chern", help="first Chern number of a U(1) bundle over the sphere")
    common(sp, sampling=False)
    sp.add_argument("--resolution", type=_positive_int, default=DEFAULT_RESOLUTION)
    sp.set_defaults(func=cmd_chern)

    sp = sub.add_parser("report", help="every applicable validator and computation")
    common(sp)
    sp.add_argument("--step", type=_positive_float, default=DEFAULT_STEP)
    sp.add_argument("--resolution", type=_positive_int, default=None)
    sp.add_argument("--threads", type=_positive_int, default=1)
    sp.add_argument("--csv", help="write sampled F or K sqrt(g) values to this CSV file")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("catalog", help="built-in and user catalog entries")
    sp.add_argument("action", choices=("list", "show"))
    sp.add_argument("name", nargs="?")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (SpecError, UsageError) as exc:
        print(f"bundlekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"bundlekit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
