"""Chart atlases: overlap maps, Jacobians, deterministic overlap sampling.

Catalog conventions
-------------------
``sphere``
    Chart ``N`` has coordinates ``(u, v) = (x, y)/(1 + z)`` (projection from
    the south pole; the northern hemisphere is the unit disk).  Chart ``S``
    has ``(s, t) = (x, -y)/(1 - z)``.  On the overlap ``s = u/(u^2+v^2)``,
    ``t = -v/(u^2+v^2)``, which is orientation preserving.  Both charts are
    cut off at radius 5.
``circle``
    Two arcs.  ``A`` has coordinate ``a`` equal to the angle, ``a`` in
    ``(-3pi/4, 3pi/4)``; ``B`` has ``b`` in ``(pi/4, 7pi/4)``.  The overlap
    has a top piece (``b = a``) and a bottom piece (``b = a + 2pi``); the
    smooth factor ``sin(a)/sqrt(sin(a)^2)`` equals +1 on the top piece and
    -1 on the bottom one and is used to write both pieces as one expression.
``circle12``
    Twelve arcs ``C0..C11``; arc ``k`` has coordinate ``ck`` equal to the
    angle on ``(k pi/6 - pi/8, k pi/6 + pi/8)``.  Neighbouring arcs overlap in
    one connected piece and triple overlaps are empty.  Small arcs let the
    degree-2 map send each arc into a single chart of ``circle``.
``torus``
    Product of two ``circle`` atlases; charts ``AA, AB, BA, BB`` with
    coordinates ``(x_aa, y_aa)`` and so on.
``interval``
    One chart ``I`` with coordinate ``x`` on ``(0, 1)``.
``plane``
    One chart ``P`` with coordinates ``(x, y)`` on ``(-1, 1)^2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .expr import Expr, as_expr, differentiate, evaluate, evaluate_real, free_coordinates
from .report import Check, ValidationReport, worst_point

DOMAIN_MARGIN = 1e-6
DEFAULT_SAMPLES = 256
DEFAULT_SEED = 20240607


class AtlasError(Exception):
    pass


class DomainViolation(AtlasError):
    """A point lies outside a chart or overlap domain."""

    def __init__(self, message: str, point=None, constraint: str | None = None):
        self.point = point
        self.constraint = constraint
        super().__init__(message)


@dataclass(frozen=True)
class Chart:
    name: str
    coordinates: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    conditions: tuple[Expr, ...] = ()

    def __post_init__(self):
        if len(set(self.coordinates)) != len(self.coordinates):
            raise AtlasError(f"chart {self.name}: duplicate coordinate names")
        if len(self.box) != len(self.coordinates):
            raise AtlasError(f"chart {self.name}: box needs one interval per coordinate")
        for c in self.conditions:
            extra = free_coordinates(c) - set(self.coordinates)
            if extra:
                raise AtlasError(f"chart {self.name}: condition uses {sorted(extra)}")

    @property
    def dimension(self) -> int:
        return len(self.coordinates)

    def bindings(self, points) -> dict[str, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return {c: pts[:, k] for k, c in enumerate(self.coordinates)}

    def contains(self, points, margin: float = DOMAIN_MARGIN) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        for k, (lo, hi) in enumerate(self.box):
            ok &= (pts[:, k] > lo + margin) & (pts[:, k] < hi - margin)
        b = self.bindings(pts)
        for c in self.conditions:
            ok &= np.real(evaluate(c, b)) > 0
        return ok


@dataclass(frozen=True)
class OverlapMap:
    source: str
    target: str
    maps: tuple[Expr, ...]
    conditions: tuple[Expr, ...] = ()


@dataclass
class Atlas:
    name: str
    charts: dict[str, Chart]
    overlaps: dict[tuple[str, str], OverlapMap]
    orientable: bool = True
    _jac: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        dims = {c.dimension for c in self.charts.values()}
        if len(dims) != 1:
            raise AtlasError(f"atlas {self.name}: charts of mixed dimension")
        for (i, j), om in self.overlaps.items():
            if i not in self.charts or j not in self.charts:
                raise AtlasError(f"atlas {self.name}: overlap {i}->{j} names unknown chart")
            if (j, i) not in self.overlaps:
                raise AtlasError(f"atlas {self.name}: overlap {i}->{j} has no reverse map")
            if len(om.maps) != self.charts[j].dimension:
                raise AtlasError(f"overlap {i}->{j}: need one map per target coordinate")
            src = set(self.charts[i].coordinates)
            for e in om.maps + om.conditions:
                if free_coordinates(e) - src:
                    raise AtlasError(f"overlap {i}->{j}: expressions must use {i} coordinates")
            shared = set(self.charts[i].coordinates) & set(self.charts[j].coordinates)
            if shared:
                raise AtlasError(
                    f"atlas {self.name}: overlapping charts {i}, {j} share coordinate "
                    f"names {sorted(shared)}")

    @property
    def dimension(self) -> int:
        return next(iter(self.charts.values())).dimension

    def chart(self, name: str) -> Chart:
        try:
            return self.charts[name]
        except KeyError:
            raise AtlasError(f"atlas {self.name} has no chart {name!r}") from None

    def overlap(self, i: str, j: str) -> OverlapMap:
        try:
            return self.overlaps[(i, j)]
        except KeyError:
            raise AtlasError(f"atlas {self.name}: charts {i} and {j} do not overlap") from None

    def overlap_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.overlaps)

    def in_overlap(self, i: str, j: str, points) -> np.ndarray:
        """Mask of points (in chart ``i`` coordinates) inside the overlap with ``j``."""
        om = self.overlap(i, j)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ci = self.chart(i)
        ok = ci.contains(pts)
        b = ci.bindings(pts)
        for c in om.conditions:
            ok &= np.real(evaluate(c, b)) > 0
        if np.any(ok):
            image = self._map(om, self.chart(i).bindings(pts[ok]))
            ok[ok] = self.chart(j).contains(image)
        return ok

    def _map(self, om: OverlapMap, bindings) -> np.ndarray:
        n = len(next(iter(bindings.values())))
        cols = [np.broadcast_to(evaluate_real(m, bindings), (n,)) for m in om.maps]
        return np.stack(cols, axis=1)

    def _check_overlap(self, i, j, pts):
        ok = self.in_overlap(i, j, pts)
        if not np.all(ok):
            bad = pts[np.argmin(ok)]
            reason = self._violated(i, j, bad)
            raise DomainViolation(
                f"point {tuple(float(x) for x in bad)} of chart {i} is outside the "
                f"{i}/{j} overlap ({reason})", bad, reason)

    def _violated(self, i, j, p) -> str:
        ci = self.chart(i)
        for k, (lo, hi) in enumerate(ci.box):
            if not lo + DOMAIN_MARGIN < p[k] < hi - DOMAIN_MARGIN:
                return f"{lo} < {ci.coordinates[k]} < {hi}"
        b = ci.bindings(p)
        for c in ci.conditions + self.overlap(i, j).conditions:
            if not np.real(evaluate(c, b))[0] > 0:
                return f"{c} > 0"
        return f"image outside chart {j}"

    def overlap_apply(self, i: str, j: str, point, check: bool = True) -> np.ndarray:
        """Coordinates in chart ``j`` of points given in chart ``i``.

        Accepts one point (1-d) or a stack of points (2-d).
        """
        pts = np.asarray(point, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if i == j:
            return pts[0].copy() if single else pts.copy()
        om = self.overlap(i, j)
        if check:
            self._check_overlap(i, j, pts)
        out = self._map(om, self.chart(i).bindings(pts))
        return out[0] if single else out

    def jacobian_exprs(self, i: str, j: str) -> tuple[tuple[Expr, ...], ...]:
        """Symbolic d x_j^mu / d x_i^lambda in chart ``i`` coordinates."""
        key = (i, j)
        if key not in self._jac:
            om = self.overlap(i, j)
            src = self.chart(i).coordinates
            self._jac[key] = tuple(tuple(differentiate(m, c) for c in src) for m in om.maps)
        return self._jac[key]

    def jacobian(self, i: str, j: str, point, check: bool = True) -> np.ndarray:
        """Matrix (or stack) of d x_j / d x_i at points given in chart ``i``."""
        pts = np.asarray(point, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        n = self.dimension
        if i == j:
            out = np.broadcast_to(np.eye(n), (len(pts), n, n)).copy()
        else:
            if check:
                self._check_overlap(i, j, pts)
            b = self.chart(i).bindings(pts)
            rows = self.jacobian_exprs(i, j)
            out = np.empty((len(pts), n, n))
            for r in range(n):
                for c in range(n):
                    out[:, r, c] = np.broadcast_to(evaluate_real(rows[r][c], b), (len(pts),))
            det = np.linalg.det(out)
            if np.any(np.abs(det) < 1e-12):
                k = int(np.argmin(np.abs(det)))
                raise AtlasError(f"singular Jacobian {i}->{j} at {tuple(pts[k])}")
        return out[0] if single else out

    # -- sampling ----------------------------------------------------------

    def sample_chart(self, i: str, count: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                     where=None) -> np.ndarray:
        """Deterministic low-discrepancy points of chart ``i`` (optionally filtered)."""
        chart = self.chart(i)
        lo = np.array([b[0] for b in chart.box]) + DOMAIN_MARGIN
        hi = np.array([b[1] for b in chart.box]) - DOMAIN_MARGIN
        sampler = qmc.Halton(d=chart.dimension, scramble=True, seed=seed)
        kept: list[np.ndarray] = []
        total = 0
        for _ in range(200):
            batch = qmc.scale(sampler.random(max(4 * count, 64)), lo, hi)
            ok = chart.contains(batch)
            if where is not None:
                ok &= where(batch)
            kept.append(batch[ok])
            total += int(ok.sum())
            if total >= count:
                break
        pts = np.concatenate(kept)[:count] if kept else np.empty((0, chart.dimension))
        return pts

    def sample_overlap(self, i: str, j: str, count: int = DEFAULT_SAMPLES,
                       seed: int = DEFAULT_SEED) -> np.ndarray:
        return self.sample_chart(i, count, seed, where=lambda p: self.in_overlap(i, j, p))

    def triple_overlaps(self) -> list[tuple[str, str, str]]:
        out = []
        for i, j, k in itertools.permutations(sorted(self.charts), 3):
            if (i, j) in self.overlaps and (i, k) in self.overlaps and (j, k) in self.overlaps:
                out.append((i, j, k))
        return out

    def sample_triple(self, i: str, j: str, k: str, count: int = DEFAULT_SAMPLES,
                      seed: int = DEFAULT_SEED) -> np.ndarray:
        def where(p):
            ok = self.in_overlap(i, j, p) & self.in_overlap(i, k, p)
            if np.any(ok):
                q = np.zeros_like(p)
                q[ok] = self.overlap_apply(i, j, p[ok], check=False)
                ok[ok] &= self.in_overlap(j, k, q[ok])
            return ok
        return self.sample_chart(i, count, seed, where=where)

    def overlap_bindings(self, i: str, j: str, points) -> dict[str, np.ndarray]:
        """Bindings for both charts' coordinates at points given in chart ``i``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        b = self.chart(i).bindings(pts)
        if i != j:
            b.update(self.chart(j).bindings(self.overlap_apply(i, j, pts, check=False)))
        return b

    def orientation_residual(self, samples: int = 64, seed: int = DEFAULT_SEED) -> float:
        """Most negative Jacobian determinant over sampled overlaps (0 if none)."""
        worst = 0.0
        for i, j in self.overlap_pairs():
            pts = self.sample_overlap(i, j, samples, seed)
            if len(pts):
                det = np.linalg.det(self.jacobian(i, j, pts, check=False))
                worst = min(worst, float(det.min()))
        return worst


def validate_atlas(atlas: Atlas, samples: int = DEFAULT_SAMPLES,
                   seed: int = DEFAULT_SEED) -> ValidationReport:
    """Round trip of overlap maps, ``J(i->j) J(j->i) = 1`` and declared orientation."""
    rep = ValidationReport(f"atlas:{atlas.name}", samples=samples, seed=seed)
    trip = (0.0, None)
    inv = (0.0, None)
    for i, j in atlas.overlap_pairs():
        pts = atlas.sample_overlap(i, j, samples, seed)
        if not len(pts):
            continue
        q = atlas.overlap_apply(i, j, pts, check=False)
        back = atlas.overlap_apply(j, i, q, check=False)
        r = np.max(np.abs(back - pts), axis=1)
        jj = atlas.jacobian(j, i, q, check=False) @ atlas.jacobian(i, j, pts, check=False)
        ri = np.max(np.abs(jj - np.eye(atlas.dimension)), axis=(1, 2))
        coords = atlas.chart(i).coordinates
        if r.max() >= trip[0]:
            trip = (float(r.max()), worst_point(i, coords, pts[int(np.argmax(r))]))
        if ri.max() >= inv[0]:
            inv = (float(ri.max()), worst_point(i, coords, pts[int(np.argmax(ri))]))
    rep.add(Check("round-trip", trip[0], 1e-10, trip[1]))
    rep.add(Check("jacobian-inverse", inv[0], 1e-9, inv[1]))
    worst = atlas.orientation_residual(samples, seed)
    chk = Check("orientation", max(0.0, -worst), 0.0, detail={"declared": atlas.orientable,
                                                    "minDeterminant": worst})
    if not atlas.orientable:
        chk.status_override = True  # nothing to verify for a non-orientable declaration
    rep.add(chk)
    return rep


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def _e(*texts) -> tuple[Expr, ...]:
    return tuple(as_expr(t) for t in texts)


SIGN_SIN = "sin({0})/sqrt(sin({0})^2)"


def sphere_atlas() -> Atlas:
    r = 5.0
    charts = {
        "N": Chart("N", ("u", "v"), ((-r, r), (-r, r)), _e("25 - u^2 - v^2")),
        "S": Chart("S", ("s", "t"), ((-r, r), (-r, r)), _e("25 - s^2 - t^2")),
    }
    overlaps = {
        ("N", "S"): OverlapMap("N", "S", _e("u/(u^2 + v^2)", "-v/(u^2 + v^2)"),
                               _e("u^2 + v^2 - 0.04")),
        ("S", "N"): OverlapMap("S", "N", _e("s/(s^2 + t^2)", "-t/(s^2 + t^2)"),
                               _e("s^2 + t^2 - 0.04")),
    }
    return Atlas("sphere", charts, overlaps)


def circle_atlas() -> Atlas:
    q = math.pi / 4
    charts = {
        "A": Chart("A", ("a",), ((-3 * q, 3 * q),)),
        "B": Chart("B", ("b",), ((q, 7 * q),)),
    }
    sa, sb = SIGN_SIN.format("a"), SIGN_SIN.format("b")
    overlaps = {
        ("A", "B"): OverlapMap("A", "B", _e(f"a + pi - pi*{sa}"), _e("sin(a)^2 - 0.5")),
        ("B", "A"): OverlapMap("B", "A", _e(f"b - pi + pi*{sb}"), _e("sin(b)^2 - 0.5")),
    }
    return Atlas("circle", charts, overlaps)


def circle_n_atlas(n: int = 12, half_width: float = math.pi / 8) -> Atlas:
    """``n`` arcs centred at ``2 pi k / n``; arc ``k`` uses the angle itself."""
    step = 2 * math.pi / n
    charts = {}
    for k in range(n):
        c = k * step
        charts[f"C{k}"] = Chart(f"C{k}", (f"c{k}",), ((c - half_width, c + half_width),))
    overlaps = {}
    for k in range(n):
        for m in range(n):
            if k == m:
                continue
            # shift so the image lands in arc m's coordinate range
            for shift in (0.0, 2 * math.pi, -2 * math.pi):
                lo = max(k * step - half_width + shift, m * step - half_width)
                hi = min(k * step + half_width + shift, m * step + half_width)
                if hi > lo:
                    src = f"c{k}"
                    overlaps[(f"C{k}", f"C{m}")] = OverlapMap(
                        f"C{k}", f"C{m}", _e(f"{src} + {shift!r}" if shift else src),
                        _e(f"{src} - {lo - shift!r}", f"{hi - shift!r} - {src}"))
    return Atlas(f"circle{n}", charts, overlaps)


def torus_atlas() -> Atlas:
    q = math.pi / 4
    rng = {"A": (-3 * q, 3 * q), "B": (q, 7 * q)}
    charts = {}
    for p, r in itertools.product("AB", repeat=2):
        name = p + r
        charts[name] = Chart(name, (f"x_{name.lower()}", f"y_{name.lower()}"), (rng[p], rng[r]))

    def coord_map(src: str, dst: str, var: str):
        if src == dst:
            return var, None
        s = SIGN_SIN.format(var)
        expr = f"{var} + pi - pi*{s}" if src == "A" else f"{var} - pi + pi*{s}"
        return expr, f"sin({var})^2 - 0.5"

    overlaps = {}
    for i, j in itertools.permutations(charts, 2):
        xi, yi = charts[i].coordinates
        mx, cx = coord_map(i[0], j[0], xi)
        my, cy = coord_map(i[1], j[1], yi)
        conds = tuple(c for c in (cx, cy) if c)
        overlaps[(i, j)] = OverlapMap(i, j, _e(mx, my), _e(*conds))
    return Atlas("torus", charts, overlaps)


def interval_atlas() -> Atlas:
    return Atlas("interval", {"I": Chart("I", ("x",), ((0.0, 1.0),))}, {})


def plane_atlas() -> Atlas:
    return Atlas("plane", {"P": Chart("P", ("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))}, {})


CATALOG_ATLASES = {
    "sphere": sphere_atlas,
    "circle": circle_atlas,
    "circle12": circle_n_atlas,
    "torus": torus_atlas,
    "interval": interval_atlas,
    "plane": plane_atlas,
}


def catalog_atlas(name: str) -> Atlas:
    try:
        return CATALOG_ATLASES[name]()
    except KeyError:
        raise AtlasError(f"unknown catalog atlas {name!r}") from None


def atlas_from_dict(doc: dict) -> Atlas:
    charts = {}
    for c in doc["charts"]:
        charts[c["name"]] = Chart(
            c["name"], tuple(c["coordinates"]),
            tuple((float(lo), float(hi)) for lo, hi in c["box"]),
            _e(*c.get("conditions", [])))
    overlaps = {}
    for o in doc.get("overlaps", []):
        overlaps[(o["from"], o["to"])] = OverlapMap(
            o["from"], o["to"], _e(*o["maps"]), _e(*o.get("conditions", [])))
    return Atlas(doc["name"], charts, overlaps, bool(doc.get("orientable", True)))
