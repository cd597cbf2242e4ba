"""Parallel transport along chart-wise curves by fixed-step RK4.

In chart ``i`` the horizontal lift solves ``dv/dt = -Gamma_i(dC/dt) v``.  A
curve is a list of segments, each living in one chart; at a breakpoint from
chart ``j`` into chart ``i`` the components jump by ``v_i = g_ij v_j``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bundle import BundleError
from .connection import ConnectionSpec
from .expr import as_expr, differentiate, evaluate, substitute, sub, Num, Var
from .geometry import DomainViolation

DEFAULT_STEP = 1e-3
PROJECT_EVERY = 100
CLOSURE_TOL = 1e-9
CONTINUITY_TOL = 1e-9
LOGM_GUARD = 0.5
PARAM = "t"


class TransportError(BundleError):
    pass


@dataclass(frozen=True)
class Segment:
    chart: str
    t0: float
    t1: float
    coords: tuple  # Exprs in the curve parameter ``t``

    def point(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.broadcast_to(np.real(evaluate(e, {PARAM: t})), t.shape) for e in self.coords]
        return np.stack(cols, axis=-1)

    def velocity(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.broadcast_to(np.real(evaluate(differentiate(e, PARAM), {PARAM: t})), t.shape)
                for e in self.coords]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Curve:
    """A parametrized path ``t in [0, 1]`` split into single-chart segments."""

    name: str
    segments: tuple

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else
                     Segment(s[0], float(s[1]), float(s[2]), tuple(as_expr(e) for e in s[3]))
                     for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise TransportError(f"curve {self.name} has no segments")
        if abs(segs[0].t0) > 1e-15 or abs(segs[-1].t1 - 1.0) > 1e-15:
            raise TransportError(f"curve {self.name} must be parametrized over [0, 1]")
        for s in segs:
            if not s.t1 > s.t0:
                raise TransportError(f"curve {self.name}: breakpoints must increase strictly")
        for a, b in zip(segs, segs[1:]):
            if a.t1 != b.t0:
                raise TransportError(f"curve {self.name}: gap between {a.t1} and {b.t0}")

    @property
    def breakpoints(self) -> list[float]:
        return [s.t1 for s in self.segments[:-1]]

    def start(self) -> tuple[str, np.ndarray]:
        s = self.segments[0]
        return s.chart, s.point(s.t0)[0]

    def end(self) -> tuple[str, np.ndarray]:
        s = self.segments[-1]
        return s.chart, s.point(s.t1)[0]

    def check(self, atlas) -> float:
        """Worst mismatch across breakpoints; raises if above tolerance."""
        worst = 0.0
        for a, b in zip(self.segments, self.segments[1:]):
            pa, pb = a.point(a.t1)[0], b.point(b.t0)[0]
            if a.chart != b.chart:
                try:
                    pa = atlas.overlap_apply(a.chart, b.chart, pa)
                except DomainViolation as exc:
                    raise TransportError(f"curve {self.name}: switch {a.chart}->{b.chart} at "
                                         f"t={a.t1} is outside the overlap ({exc})") from None
            gap = float(np.max(np.abs(pa - pb)))
            worst = max(worst, gap)
            if gap > CONTINUITY_TOL:
                raise TransportError(f"curve {self.name} is discontinuous at t={a.t1} "
                                     f"(gap {gap:.3g})")
        return worst

    def reversed(self) -> "Curve":
        flip = {PARAM: sub(Num(1.0), Var(PARAM))}
        segs = tuple(Segment(s.chart, 1.0 - s.t1, 1.0 - s.t0,
                             tuple(substitute(e, flip) for e in s.coords))
                     for s in reversed(self.segments))
        # keep endpoints exact after the 1 - t arithmetic
        fixed = []
        for k, s in enumerate(segs):
            t0 = 0.0 if k == 0 else fixed[-1].t1
            t1 = 1.0 if k == len(segs) - 1 else s.t1
            fixed.append(Segment(s.chart, t0, t1, s.coords))
        return Curve(f"{self.name}~", tuple(fixed))

    def to_dict(self) -> dict:
        return {"name": self.name,
                "segments": [{"chart": s.chart, "t0": s.t0, "t1": s.t1,
                              "coords": [str(e) for e in s.coords]} for s in self.segments]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Curve":
        return cls(doc["name"], tuple((s["chart"], s["t0"], s["t1"], s["coords"])
                                      for s in doc["segments"]))


@dataclass
class TransportResult:
    kind: str  # vector | frame
    chart: str
    value: np.ndarray
    itinerary: list = field(default_factory=list)
    steps: int = 0
    max_local_error: float = 0.0
    error_estimate: float = 0.0
    projections: int = 0
    membership_residual: float | None = None

    def to_dict(self) -> dict:
        v = self.value
        out = {"kind": self.kind, "chart": self.chart,
               "value": {"re": np.real(v).tolist(), "im": np.imag(v).tolist()},
               "itinerary": self.itinerary,
               "integrator": {"method": "rk4", "steps": self.steps,
                              "maxLocalError": self.max_local_error,
                              "errorEstimate": self.error_estimate,
                              "projections": self.projections}}
        if self.membership_residual is not None:
            out["membershipResidual"] = self.membership_residual
        return out


def _rk4(y, a0, am, a1, h):
    k1 = -a0 @ y
    k2 = -am @ (y + 0.5 * h * k1)
    k3 = -am @ (y + 0.5 * h * k2)
    k4 = -a1 @ (y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _segment_generator(conn: ConnectionSpec, seg: Segment, nsteps: int) -> np.ndarray:
    """``Gamma(dC/dt)`` at the ``2*nsteps + 1`` half-step nodes of the segment."""
    atlas = conn.bundle.atlas
    ts = np.linspace(seg.t0, seg.t1, 2 * nsteps + 1)
    pts = seg.point(ts)
    inside = atlas.chart(seg.chart).contains(pts, margin=0.0)
    if not np.all(inside):
        k = int(np.argmin(inside))
        raise TransportError(f"curve leaves chart {seg.chart} at t={ts[k]:.6g} "
                             f"(point {tuple(np.round(pts[k], 12))})")
    vel = seg.velocity(ts)
    gam = conn[seg.chart].evaluate(pts)  # (npts, dim, n, n)
    return np.einsum("pm,pmab->pab", vel, gam)


def _project(group, y):
    return group.project(y[None])[0] if group.kind not in ("GL(n,R)", "GL(n,C)") else y


def _integrate(conn: ConnectionSpec, curve: Curve, y0: np.ndarray, step: float,
               project: bool):
    if not step > 0 or not math.isfinite(step):
        raise TransportError(f"invalid step {step}")
    atlas = conn.bundle.atlas
    curve.check(atlas)
    y = np.array(y0, dtype=complex)
    group = conn.bundle.group
    itinerary = [{"event": "start", "t": 0.0, "chart": curve.segments[0].chart,
                  "point": curve.segments[0].point(0.0)[0]}]
    total_steps = 0
    projections = 0
    max_local = 0.0
    accum = 0.0
    prev = None
    for seg in curve.segments:
        if prev is not None and prev.chart != seg.chart:
            p = seg.point(seg.t0)  # coordinates of the chart being entered
            g = conn.bundle.eval_transition(seg.chart, prev.chart, p)[0]
            y = g @ y
            itinerary.append({"event": "switch", "t": seg.t0, "from": prev.chart,
                              "to": seg.chart, "point": p[0],
                              "transition": {"re": g.real, "im": g.imag}})
        length = seg.t1 - seg.t0
        nsteps = max(1, int(math.ceil(length / step - 1e-9)))
        h = length / nsteps
        if h < 1e-14:
            raise TransportError("step underflow")
        gen = _segment_generator(conn, seg, nsteps)
        pair_start = y
        for k in range(nsteps):
            y = _rk4(y, gen[2 * k], gen[2 * k + 1], gen[2 * k + 2], h)
            if k % 2 == 1:
                # Richardson estimate from one double step over the same pair
                coarse = _rk4(pair_start, gen[2 * k - 2], gen[2 * k], gen[2 * k + 2], 2 * h)
                err = float(np.max(np.abs(coarse - y))) / 30.0
                max_local = max(max_local, err)
                accum += 2 * err
                pair_start = y
            total_steps += 1
            if project and total_steps % PROJECT_EVERY == 0:
                y = _project(group, y)
                projections += 1
        if nsteps % 2 == 1:
            pair_start = y
        prev = seg
    itinerary.append({"event": "end", "t": 1.0, "chart": prev.chart,
                      "point": prev.point(prev.t1)[0]})
    return y, prev.chart, itinerary, total_steps, max_local, accum, projections


def parallel_transport_vector(conn: ConnectionSpec, curve: Curve, v0,
                              step: float = DEFAULT_STEP) -> TransportResult:
    """Components at the end of ``curve`` of the horizontal lift through ``v0``."""
    v0 = np.asarray(v0, dtype=complex).reshape(-1)
    if v0.shape != (conn.bundle.rank,):
        raise TransportError(f"v0 needs {conn.bundle.rank} components")
    y, chart, itin, steps, ml, acc, _ = _integrate(conn, curve, v0[:, None], step, False)
    return TransportResult("vector", chart, y[:, 0], itin, steps, ml, acc)


def transport_frame(conn: ConnectionSpec, curve: Curve, step: float = DEFAULT_STEP,
                    project: bool = False) -> TransportResult:
    """Transporter matrix: solves ``dg/dt = -Gamma(dC/dt) g`` from the identity."""
    n = conn.bundle.rank
    y, chart, itin, steps, ml, acc, nproj = _integrate(conn, curve, np.eye(n), step, project)
    member = float(np.max(conn.bundle.group.membership_residual(y[None])))
    return TransportResult("frame", chart, y, itin, steps, ml, acc, nproj, member)


def holonomy(conn: ConnectionSpec, loop: Curve, step: float = DEFAULT_STEP,
             project: bool = False) -> TransportResult:
    c0, p0 = loop.start()
    c1, p1 = loop.end()
    if c0 != c1 or float(np.max(np.abs(p0 - p1))) > CLOSURE_TOL:
        raise TransportError(f"loop {loop.name} is not closed in one chart "
                             f"({c0}{tuple(p0)} vs {c1}{tuple(p1)})")
    return transport_frame(conn, loop, step, project)


def transport_many(conn: ConnectionSpec, curves, step: float = DEFAULT_STEP,
                   threads: int = 1) -> list[TransportResult]:
    """Frames along several curves; output order follows input order."""
    curves = list(curves)
    if threads <= 1:
        return [transport_frame(conn, c, step) for c in curves]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: transport_frame(conn, c, step), curves))


def rotation_angle(m: np.ndarray) -> float:
    """Angle of a 2x2 matrix conjugate to a rotation by a scalar change of frame."""
    m = np.real(np.asarray(m))
    return math.atan2(m[1, 0] - m[0, 1], m[0, 0] + m[1, 1])


# ---------------------------------------------------------------------------
# infinitesimal loops
# ---------------------------------------------------------------------------

def square_loop(chart: str, coordinates, x, mu: int, nu: int, eps: float) -> Curve:
    """Counterclockwise ``eps``-square in the ``(mu, nu)`` coordinate plane, corner at ``x``."""
    x = np.asarray(x, dtype=float)
    if mu == nu:
        raise TransportError("square loop needs two distinct directions")
    corners = [x.copy() for _ in range(5)]
    corners[1][mu] += eps
    corners[2][mu] += eps
    corners[2][nu] += eps
    corners[3][nu] += eps
    segs = []
    for k in range(4):
        a, b = corners[k], corners[k + 1]
        t0, t1 = k / 4, (k + 1) / 4
        coords = []
        for c in range(len(x)):
            if a[c] == b[c]:
                coords.append(Num(float(a[c])))
            else:
                slope = float(b[c] - a[c]) * 4
                coords.append(as_expr(f"{float(a[c])!r} + {slope!r}*(t - {t0!r})"))
        segs.append(Segment(chart, t0, t1 if k < 3 else 1.0, tuple(coords)))
    return Curve(f"square[{chart}]", tuple(segs))


def logm_near_identity(h: np.ndarray) -> np.ndarray:
    if float(np.linalg.norm(h - np.eye(len(h)), 2)) >= LOGM_GUARD:
        raise TransportError("holonomy too far from the identity for a reliable logarithm; "
                             "shrink the loop")
    return scipy.linalg.logm(h)


def loop_curvature_estimate(conn: ConnectionSpec, chart: str, x, mu: int = 0, nu: int = 1,
                            eps: float = 1e-2, step: float = DEFAULT_STEP) -> np.ndarray:
    """``logm(H) / eps^2`` for the ``eps``-square at ``x``; tends to ``-R(d_mu, d_nu)(x)``."""
    coords = conn.bundle.atlas.chart(chart).coordinates
    loop = square_loop(chart, coords, x, mu, nu, eps)
    h = holonomy(conn, loop, step).value
    return logm_near_identity(h) / eps ** 2
