"""Built-in spec documents.

Every entry is a plain spec-file document, loaded through the same schema
and loader as user files.  Conventions fixed here:

* sphere, chart ``N``: ``(u, v) = (x, y) / (1 + z)``; chart ``S``:
  ``(s, t) = (x, -y) / (1 - z)``.  On the overlap ``s = u/r^2``,
  ``t = -v/r^2``; both charts induce the same orientation.
* circle, chart ``A``: angle in ``(-3pi/4, 3pi/4)``; chart ``B``: angle in
  ``(pi/4, 7pi/4)``.  The two overlap components are the upper arc
  (``sin > 0``) and the lower arc (``sin < 0``).
* monopole-n: ``A_N = n (u dv - v du) / (1 + r^2)`` and the same form in
  ``(s, t)`` on ``S``; the transition is ``g_NS = e^{i n phi}`` written as
  ``((u + i v)/|u + i v|)^n``.  The first Chern number comes out as ``+n``.
"""

from __future__ import annotations

import json
import math
import os
import re
from pathlib import Path

CATALOG_ENV = "BUNDLEKIT_CATALOG_DIR"


def _sign(var: str) -> str:
    return f"sin({var})/sqrt(sin({var})^2)"


def _phase(x: str, y: str, n: int) -> str:
    if n == 0:
        return "1"
    base = f"(({x} + i*{y})/sqrt({x}^2 + {y}^2))"
    return base if n == 1 else f"{base}^({n})"


def _r2(x, y):
    return f"(1 + {x}^2 + {y}^2)"


def _circle_loop(chart: str, r: float, name: str) -> dict:
    return {"name": name, "segments": [
        {"chart": chart, "t0": 0.0, "t1": 1.0,
         "coords": [f"{r!r}*cos(2*pi*t)", f"{r!r}*sin(2*pi*t)"]}]}


def _split_loop(r: float, name: str) -> dict:
    """Circle ``|w| = r`` in chart N, with its middle third traversed in chart S."""
    ri = 1.0 / r
    return {"name": name, "segments": [
        {"chart": "N", "t0": 0.0, "t1": 1 / 3,
         "coords": [f"{r!r}*cos(2*pi*t)", f"{r!r}*sin(2*pi*t)"]},
        {"chart": "S", "t0": 1 / 3, "t1": 2 / 3,
         "coords": [f"{ri!r}*cos(2*pi*t)", f"-{ri!r}*sin(2*pi*t)"]},
        {"chart": "N", "t0": 2 / 3, "t1": 1.0,
         "coords": [f"{r!r}*cos(2*pi*t)", f"{r!r}*sin(2*pi*t)"]}]}


def colatitude_radius(theta0: float) -> float:
    """Stereographic radius in chart N of the colatitude-``theta0`` circle."""
    return math.tan(theta0 / 2)


def mobius() -> dict:
    return {
        "specVersion": 1,
        "name": "mobius",
        "description": "Real line bundle over the circle: transition +1 on the upper overlap "
                       "arc, -1 on the lower arc.",
        "atlas": "circle",
        "group": {"kind": "Z2", "n": 1},
        "fiber": "vector",
        "field": "real",
        "transitions": {"A,B": [[_sign("a")]], "B,A": [[_sign("b")]]},
        "connection": {"forms": {"A": {}, "B": {}}},
        "sections": [{"name": "zero", "kind": "vector",
                      "components": {"A": ["0"], "B": ["0"]}}],
        "gauge_transformations": [{"name": "flip", "kind": "automorphism",
                                   "gamma": {"A": [["-1"]], "B": [["-1"]]}}],
        "curves": [{"name": "around", "segments": [
            {"chart": "A", "t0": 0.0, "t1": 0.25, "coords": ["2*pi*t"]},
            {"chart": "B", "t0": 0.25, "t1": 0.75, "coords": ["2*pi*t"]},
            {"chart": "A", "t0": 0.75, "t1": 1.0, "coords": ["2*pi*t - 2*pi"]}]}],
        "loops": [{"name": "around", "hops": [
            {"from": "A", "to": "B", "at": [math.pi / 2]},
            {"from": "B", "to": "A", "at": [3 * math.pi / 2]}]}],
    }


ARCS = 12


def _arc_hops() -> list:
    step = 2 * math.pi / ARCS
    return [{"from": f"C{k}", "to": f"C{(k + 1) % ARCS}", "at": [k * step + step / 2]}
            for k in range(ARCS)]


def mobius_double() -> dict:
    """Pullback of the Moebius bundle along the degree-2 map of the circle."""
    two_pi = 2 * math.pi
    assign = {}
    for k in range(ARCS):
        centre = 2 * k * two_pi / ARCS  # image of the arc centre under the doubling map
        rem = centre % two_pi
        if rem < math.pi / 2 or rem > 3 * math.pi / 2:
            chart, wraps = "A", round(centre / two_pi)
        else:
            chart, wraps = "B", math.floor(centre / two_pi)
        expr = f"2*c{k}" + (f" - {wraps * two_pi!r}" if wraps else "")
        assign[f"C{k}"] = {"chart": chart, "maps": [expr]}
    return {
        "specVersion": 1,
        "name": "mobius-double",
        "description": "Moebius bundle pulled back along z -> z^2 on the circle; trivializable.",
        "atlas": "circle12",
        "construction": {"kind": "pullback", "of": "mobius", "assignment": assign},
        "loops": [{"name": "around", "hops": _arc_hops()}],
    }


def mobius_sum() -> dict:
    return {
        "specVersion": 1,
        "name": "mobius-sum",
        "description": "Whitney sum of two Moebius bundles; orientable rank-2 bundle.",
        "atlas": "circle",
        "construction": {"kind": "whitney", "summands": ["mobius", "mobius"]},
        "loops": mobius()["loops"],
    }


def monopole(n: int) -> dict:
    pot = {}
    for chart, (x, y) in (("N", ("u", "v")), ("S", ("s", "t"))):
        pot[chart] = {f"d{x}": f"-{n}*{y}/{_r2(x, y)}", f"d{y}": f"{n}*{x}/{_r2(x, y)}"}
    r_eq = 1.0
    return {
        "specVersion": 1,
        "name": f"monopole-{n}",
        "description": f"U(1) bundle over the sphere with first Chern number {n}; gauge "
                       f"potential of a uniform magnetic field with total flux {2 * n}*pi.",
        "atlas": "sphere",
        "group": {"kind": "U(1)", "n": 1},
        "fiber": "vector",
        "field": "complex",
        "transitions": {"N,S": [[_phase("u", "v", n)]], "S,N": [[_phase("s", "t", n)]]},
        "gauge_field": {"q": 1.0, "unitary": True, "potential": pot},
        "gauge_transformations": [
            {"name": "phase", "kind": "automorphism",
             "gamma": {"N": [["exp(0.7*i)"]], "S": [["exp(0.7*i)"]]}}],
        "curves": [_circle_loop("N", r_eq, "equator"), _split_loop(r_eq, "equator-split")],
        "tasks": {"chern": {"resolution": 128}},
    }


def _lc_forms(x: str, y: str) -> dict:
    a = f"(-2*{x}/{_r2(x, y)})"
    b = f"(-2*{y}/{_r2(x, y)})"
    return {f"d{x}": [[a, b], [f"-{b}", a]],
            f"d{y}": [[b, f"-{a}"], [a, b]]}


def tangent_sphere() -> dict:
    curves = []
    for label, th in (("pi/6", math.pi / 6), ("pi/3", math.pi / 3), ("pi/2", math.pi / 2)):
        curves.append(_circle_loop("N", colatitude_radius(th), f"colatitude-{label}"))
    curves.append(_split_loop(colatitude_radius(math.pi / 3), "colatitude-pi/3-split"))
    return {
        "specVersion": 1,
        "name": "tangent-sphere",
        "description": "Tangent bundle of the sphere with Jacobian transitions and the "
                       "Levi-Civita connection of the round metric (any radius).",
        "atlas": "sphere",
        "construction": {"kind": "tangent"},
        "connection": {"forms": {"N": _lc_forms("u", "v"), "S": _lc_forms("s", "t")},
                       "algebra": "none", "torsion_free": True},
        "sections": [{"name": "zero", "kind": "vector",
                      "components": {"N": ["0", "0"], "S": ["0", "0"]}}],
        "curves": curves,
        "tasks": {"total_curvature": {"resolution": 128}},
    }


def asymmetric_flat() -> dict:
    return {
        "specVersion": 1,
        "name": "asymmetric-flat",
        "description": "Tangent bundle of a flat square chart with the torsionful connection "
                       "Gamma^x_{xy} = 1; torsion T^x = -dx^dy.",
        "atlas": "plane",
        "construction": {"kind": "tangent"},
        "connection": {"forms": {"P": {"dy": [["1", "0"], ["0", "0"]]}}},
    }


def torus_su2() -> dict:
    sx = [["0", "1"], ["1", "0"]]
    sy = [["0", "-i"], ["i", "0"]]
    scale = lambda m, c: [[f"{c}*{e}" if e != "0" else "0" for e in row] for row in m]
    pot = {}
    for chart in ("AA", "AB", "BA", "BB"):
        x, y = f"x_{chart.lower()}", f"y_{chart.lower()}"
        pot[chart] = {f"d{x}": scale(sx, "0.3"), f"d{y}": scale(sy, "0.5")}
    one = [["1", "0"], ["0", "1"]]
    trans = {}
    for i in pot:
        for j in pot:
            if i != j:
                trans[f"{i},{j}"] = one
    return {
        "specVersion": 1,
        "name": "torus-su2",
        "description": "Trivial rank-2 unitary bundle over the torus with a constant, "
                       "non-commuting gauge potential; F = -i q A^A.",
        "atlas": "torus",
        "group": {"kind": "U(n)", "n": 2},
        "fiber": "vector",
        "field": "complex",
        "transitions": trans,
        "gauge_field": {"q": 1.0, "unitary": True, "potential": pot},
    }


def plane_constant_field() -> dict:
    return {
        "specVersion": 1,
        "name": "plane-constant-field",
        "description": "U(1) gauge potential of a uniform unit field on a square chart.",
        "atlas": "plane",
        "group": {"kind": "U(1)", "n": 1},
        "fiber": "vector",
        "field": "complex",
        "transitions": {},
        "gauge_field": {"q": 1.0, "unitary": True,
                        "potential": {"P": {"dx": "-0.5*y", "dy": "0.5*x"}}},
        "curves": [_circle_loop("P", 0.5, "circle")],
    }


MONOPOLE_RANGE = range(-2, 3)

BUILTIN = {
    "mobius": mobius,
    "mobius-double": mobius_double,
    "mobius-sum": mobius_sum,
    "tangent-sphere": tangent_sphere,
    "asymmetric-flat": asymmetric_flat,
    "torus-su2": torus_su2,
    "plane-constant-field": plane_constant_field,
}
for _n in MONOPOLE_RANGE:
    BUILTIN[f"monopole-{_n}"] = (lambda n: lambda: monopole(n))(_n)

_MONOPOLE = re.compile(r"^monopole-(m?)(-?\d+)$")


class CatalogError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "catalog error"


def _user_dir() -> Path | None:
    d = os.environ.get(CATALOG_ENV)
    return Path(d) if d else None


def user_entries() -> dict[str, Path]:
    d = _user_dir()
    if d is None or not d.is_dir():
        return {}
    return {p.stem: p for p in sorted(d.glob("*.json"))}


def names() -> list[str]:
    return sorted(set(BUILTIN) | set(user_entries()))


def get(name: str) -> dict:
    """Spec document for a catalog name (user directory entries shadow built-ins)."""
    user = user_entries()
    if name in user:
        with open(user[name], encoding="utf-8") as fh:
            return json.load(fh)
    if name in BUILTIN:
        return BUILTIN[name]()
    m = _MONOPOLE.match(name)
    if m:
        n = int(m.group(2))
        return monopole(-n if m.group(1) else n)
    raise CatalogError(f"unknown catalog entry {name!r}")


def listing() -> list[dict]:
    out = []
    for name in names():
        doc = get(name)
        atlas = doc.get("atlas")
        out.append({"name": name,
                    "atlas": atlas if isinstance(atlas, str) else atlas.get("name"),
                    "description": doc.get("description", ""),
                    "source": "user" if name in user_entries() else "builtin",
                    "has_connection": "connection" in doc or "gauge_field" in doc})
    return out
