"""Characteristic numbers by quadrature, and the aggregate report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import (BundleError, check_gauge, check_section, loop_class, validate_cocycle)
from .connection import (ConnectionSpec, GaugeField, curvature, field_strength, torsion,
                         validate_connection)
from .geometry import DEFAULT_SAMPLES, DEFAULT_SEED, validate_atlas
from .report import ValidationReport, _clean, tool_info
from .transport import DEFAULT_STEP, Curve, holonomy, parallel_transport_vector, transport_frame

DEFAULT_RESOLUTION = 128
CHERN_TOL = 1e-3
GAUSS_BONNET_TOL = 1e-3
TORSION_LIMIT = 1e-6
SPHERE_CHARTS = ("N", "S")


class InvariantError(BundleError):
    pass


@dataclass
class ChernReport:
    raw: float
    nearest: int
    deviation: float
    resolution: int
    per_chart: dict = field(default_factory=dict)
    imaginary: float = 0.0

    @property
    def passed(self) -> bool:
        return self.deviation <= CHERN_TOL

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return _clean({"raw": self.raw, "nearest": self.nearest, "deviation": self.deviation,
                       "resolution": self.resolution, "perChart": self.per_chart,
                       "imaginary": self.imaginary, "status": self.status,
                       "tolerance": CHERN_TOL})


def disk_rule(resolution: int):
    """Polar product Gauss-Legendre nodes on the unit disk with weights including ``r``."""
    x, w = np.polynomial.legendre.leggauss(resolution)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w * r
    th = math.pi * (x + 1.0)
    wth = math.pi * w
    R, TH = np.meshgrid(r, th, indexing="ij")
    W = np.outer(wr, wth)
    pts = np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], axis=1)
    return pts, W.ravel()


def _require_sphere(atlas):
    if atlas.name != "sphere" or set(atlas.charts) != set(SPHERE_CHARTS):
        raise InvariantError("characteristic numbers are implemented over the catalog sphere "
                             f"atlas only (got {atlas.name!r})")


def _integrate(values: np.ndarray, weights: np.ndarray) -> complex:
    re = math.fsum((values.real * weights).tolist())
    im = math.fsum((values.imag * weights).tolist())
    return complex(re, im)


def chern_number(conn: ConnectionSpec | GaugeField,
                 resolution: int = DEFAULT_RESOLUTION) -> ChernReport:
    """``(i / 2 pi)`` times the integral of the curvature ``R = -i q F`` over both hemispheres.

    Each hemisphere is the closed unit disk of its own chart.
    """
    if isinstance(conn, GaugeField):
        conn = conn.connection()
    bundle = conn.bundle
    if bundle.group.kind != "U(1)":
        raise InvariantError(f"Chern number needs a U(1) bundle (got {bundle.group.label})")
    _require_sphere(bundle.atlas)
    R = curvature(conn)
    pts, w = disk_rule(resolution)
    per = {}
    total = 0j
    for c in SPHERE_CHARTS:
        dens = R[c].evaluate(pts)[:, 0, 0, 0]
        val = 1j / (2 * math.pi) * _integrate(dens, w)
        per[c] = val.real
        total += val
    nearest = int(round(total.real))
    return ChernReport(total.real, nearest, abs(total.real - nearest), resolution, per,
                       total.imag)


def curvature_density(conn: ConnectionSpec, chart: str, points) -> np.ndarray:
    """Gaussian curvature times the area density, read off the 2x2 curvature matrix.

    For a Levi-Civita connection on a surface ``R(d_u, d_v)`` has determinant
    ``K^2 det g`` and its lower-left entry is ``-K g_uu``, so no metric is needed.
    """
    rm = curvature(conn)[chart].evaluate(points)[:, 0].real
    det = np.linalg.det(rm)
    if np.any(det < -1e-9):
        raise InvariantError("curvature matrix is not of Levi-Civita type "
                             "(negative determinant)")
    return -np.sign(rm[:, 1, 0]) * np.sqrt(np.clip(det, 0.0, None))


def total_curvature(conn: ConnectionSpec, resolution: int = DEFAULT_RESOLUTION) -> dict:
    """Integral of ``K dA`` over the sphere for a torsion-free tangent connection."""
    bundle = conn.bundle
    if not bundle.tangent:
        raise InvariantError("total curvature needs the tangent bundle")
    _require_sphere(bundle.atlas)
    T = torsion(conn)
    tpts = bundle.atlas.sample_chart("N", 64)
    tors = max(float(np.max(np.abs(T[c].evaluate(tpts)))) for c in SPHERE_CHARTS)
    if tors > TORSION_LIMIT:
        raise InvariantError(f"connection has torsion {tors:.3g}; total curvature is only "
                             "reported for torsion-free connections")
    pts, w = disk_rule(resolution)
    per = {c: _integrate(curvature_density(conn, c, pts).astype(complex), w).real
           for c in SPHERE_CHARTS}
    total = math.fsum(per.values())
    expected = 4 * math.pi
    return _clean({"value": total, "perChart": per, "expected": expected,
                   "deviation": abs(total - expected), "tolerance": GAUSS_BONNET_TOL,
                   "resolution": resolution,
                   "status": "PASS" if abs(total - expected) <= GAUSS_BONNET_TOL else "FAIL"})


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

def _grid(chart, n: int) -> np.ndarray:
    (a0, a1), (b0, b1) = chart.box
    # the unit disk carries one hemisphere; a wider box would only repeat the other chart
    if chart.name in SPHERE_CHARTS:
        a0, a1, b0, b1 = -1.0, 1.0, -1.0, 1.0
    xs = np.linspace(a0, a1, n)
    ys = np.linspace(b0, b1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return pts[chart.contains(pts)]


def field_csv(spec, quantity: str = "auto", n: int = 41) -> str:
    """CSV of ``F_uv`` (gauge fields) or ``K sqrt(g)`` (tangent connections) on a grid."""
    conn = spec.connection
    if conn is None:
        raise InvariantError("spec has no connection or gauge field")
    atlas = conn.bundle.atlas
    if atlas.dimension != 2:
        raise InvariantError("field CSV is defined for 2-dimensional bases")
    if quantity == "auto":
        quantity = "F" if spec.gauge_field is not None else "K"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if quantity == "F":
        if spec.gauge_field is None:
            raise InvariantError("F needs a gauge field")
        F = field_strength(spec.gauge_field)
        n_val = conn.bundle.rank
        cols = [f"value_{a}{b}_{part}" for a in range(n_val) for b in range(n_val)
                for part in ("re", "im")]
        w.writerow(["chart", "u", "v"] + cols)
        for c in sorted(atlas.charts):
            pts = _grid(atlas.chart(c), n)
            vals = F[c].evaluate(pts)[:, 0].reshape(len(pts), -1)
            for p, v in zip(pts, vals):
                row = [c, repr(float(p[0])), repr(float(p[1]))]
                for z in v:
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)
    elif quantity == "K":
        w.writerow(["chart", "u", "v", "value"])
        for c in sorted(atlas.charts):
            pts = _grid(atlas.chart(c), n)
            for p, v in zip(pts, curvature_density(conn, c, pts)):
                w.writerow([c, repr(float(p[0])), repr(float(p[1])), repr(float(v))])
    else:
        raise InvariantError(f"unknown field quantity {quantity!r}")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

def _error_entry(name: str, exc: Exception) -> dict:
    return {"name": name, "status": "FAIL", "error": f"{type(exc).__name__}: {exc}"}


def _matrix(m) -> dict:
    m = np.asarray(m)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def full_report(spec, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                tol: float | None = None, step: float = DEFAULT_STEP,
                resolution: int | None = None, threads: int = 1) -> dict:
    """Run every validator and computation that applies to ``spec`` (a loaded spec file)."""
    from concurrent.futures import ThreadPoolExecutor

    bundle = spec.bundle
    reports: list[ValidationReport] = []
    errors: list[dict] = []
    kw = {} if tol is None else {"tol": tol}

    def guarded(name, fn):
        try:
            return fn()
        except Exception as exc:  # every failure becomes a FAIL entry
            errors.append(_error_entry(name, exc))
            return None

    rep = guarded("atlas", lambda: validate_atlas(spec.atlas, samples, seed))
    if rep:
        reports.append(rep)
    rep = guarded("cocycle", lambda: validate_cocycle(bundle, samples, seed, **kw))
    if rep:
        reports.append(rep)
    for s in spec.sections:
        rep = guarded(f"section:{s.name}", lambda s=s: check_section(bundle, s, samples, seed, **kw))
        if rep:
            reports.append(rep)
    for g in spec.gauge_transformations:
        rep = guarded(f"gauge:{g.name}", lambda g=g: check_gauge(bundle, g, samples, seed, **kw))
        if rep:
            reports.append(rep)
    conn = spec.connection
    if conn is not None:
        ckw = {} if tol is None else {"tol": max(tol, 1e-8)}
        rep = guarded("connection", lambda: validate_connection(conn, samples, seed, **ckw))
        if rep:
            reports.append(rep)

    computations: dict = {}
    if spec.loops:
        lc = {}
        for name, hops in spec.loops.items():
            val = guarded(f"loop_class:{name}", lambda hops=hops: loop_class(bundle, hops))
            if val is not None:
                lc[name] = _matrix(val)
        computations["loopClass"] = lc
    if conn is not None and spec.curves:
        names = sorted(spec.curves)

        def run(name):
            curve: Curve = spec.curves[name]
            c0, p0 = curve.start()
            c1, p1 = curve.end()
            closed = c0 == c1 and float(np.max(np.abs(p0 - p1))) <= 1e-9
            res = (holonomy if closed else transport_frame)(conn, curve, step)
            out = {"closed": closed, **res.to_dict()}
            if name in spec.curve_v0:
                out["vector"] = parallel_transport_vector(conn, curve, spec.curve_v0[name],
                                                          step).to_dict()
            return out

        def safe(name):
            try:
                return name, run(name), None
            except Exception as exc:
                return name, None, exc

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(safe, names))
        else:
            results = [safe(n) for n in names]
        tr = {}
        for name, val, exc in results:
            if exc is not None:
                errors.append(_error_entry(f"transport:{name}", exc))
            else:
                tr[name] = val
        computations["transport"] = tr
    res_chern = (spec.tasks.get("chern") or {}).get("resolution", resolution or DEFAULT_RESOLUTION)
    if spec.gauge_field is not None and bundle.group.kind == "U(1)" and \
            bundle.atlas.name == "sphere":
        ch = guarded("chern", lambda: chern_number(conn, resolution or res_chern))
        if ch is not None:
            computations["chern"] = ch.to_dict()
    if conn is not None and bundle.tangent and bundle.atlas.name == "sphere":
        res_tc = (spec.tasks.get("total_curvature") or {}).get(
            "resolution", resolution or DEFAULT_RESOLUTION)
        tc = guarded("total_curvature", lambda: total_curvature(conn, resolution or res_tc))
        if tc is not None:
            computations["totalCurvature"] = tc

    ok = all(r.passed for r in reports) and not errors
    for key in ("chern", "totalCurvature"):
        if key in computations and computations[key]["status"] != "PASS":
            ok = False
    return _clean({
        "tool": tool_info(),
        "spec": spec.name,
        "status": "PASS" if ok else "FAIL",
        "samples": samples,
        "seed": seed,
        "step": step,
        "reports": [r.to_dict() for r in reports],
        "computations": computations,
        "errors": errors,
    })
