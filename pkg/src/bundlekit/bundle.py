"""Bundles given by transition functions on an atlas.

Conventions:

* ``g_ij`` maps chart-``j`` fiber components to chart-``i`` components,
  ``v_i = g_ij v_j``.  Its entries may use the coordinates of both charts.
* A gauge transformation is stored as the matrices ``gamma_i`` acting on
  components, ``v'_i = gamma_i v_i`` (so ``gamma_i^{-1}`` is the change of
  basis), together with their inverses.
* Principal sections are group-valued component matrices with
  ``s_i = g_ij s_j``; the identity section of chart ``j`` seen from chart
  ``i`` is ``g_ij`` itself, i.e. ``sigma_j = sigma_i g_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .expr import ONE, ZERO, Expr, as_expr, differentiate, div, evaluate, free_coordinates, \
    mul, neg, sub, substitute
from .forms import FormFamily, LocalForm, _emap, _obj, transform_components, value_product
from .geometry import DEFAULT_SAMPLES, DEFAULT_SEED, Atlas
from .report import Check, ValidationReport, worst_point

DEFAULT_TOL = 1e-9
MEMBERSHIP_TOL = 1e-9
# Z2 values come from evaluating a smooth sign expression; allow rounding only
Z2_TOL = 1e-12


class BundleError(Exception):
    pass


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------

GROUP_KINDS = ("GL(n,R)", "GL(n,C)", "SO(n)", "U(1)", "U(n)", "Z2")


@dataclass(frozen=True)
class GroupDescriptor:
    kind: str
    n: int = 1

    def __post_init__(self):
        if self.kind not in GROUP_KINDS:
            raise BundleError(f"unknown group kind {self.kind!r}")
        if self.kind in ("U(1)", "Z2") and self.n != 1:
            raise BundleError(f"{self.kind} acts on 1-dimensional fibers")

    @property
    def is_real(self) -> bool:
        return self.kind in ("GL(n,R)", "SO(n)", "Z2")

    @property
    def is_abelian(self) -> bool:
        return self.kind in ("U(1)", "Z2") or self.n == 1

    @property
    def label(self) -> str:
        return self.kind.replace("n", str(self.n)) if "(n" in self.kind else self.kind

    def membership_residual(self, g: np.ndarray) -> np.ndarray:
        """Per-sample distance from the group, for a stack ``(npts, n, n)``."""
        g = np.asarray(g, dtype=complex)
        eye = np.eye(self.n)
        imag = np.max(np.abs(g.imag), axis=(1, 2)) if self.is_real else np.zeros(len(g))
        det = np.linalg.det(g)
        singular = np.where(np.abs(det) < 1e-12, np.inf, 0.0)
        if self.kind == "Z2":
            r = np.minimum(np.abs(g[:, 0, 0] - 1), np.abs(g[:, 0, 0] + 1))
        elif self.kind == "U(1)":
            r = np.abs(np.abs(g[:, 0, 0]) - 1)
        elif self.kind == "U(n)":
            r = np.max(np.abs(np.conj(np.swapaxes(g, 1, 2)) @ g - eye), axis=(1, 2))
        elif self.kind == "SO(n)":
            gr = g.real
            r = np.maximum(np.max(np.abs(np.swapaxes(gr, 1, 2) @ gr - eye), axis=(1, 2)),
                           np.abs(np.linalg.det(gr) - 1))
        else:
            r = np.zeros(len(g))
        return np.maximum(np.maximum(r, imag), singular)

    def tolerance(self) -> float:
        return Z2_TOL if self.kind == "Z2" else MEMBERSHIP_TOL

    def project(self, g: np.ndarray) -> np.ndarray:
        """Nearest group element (polar factor); identity map for GL."""
        g = np.asarray(g, dtype=complex)
        if self.kind in ("SO(n)", "U(n)"):
            u, _, vh = np.linalg.svd(g)
            p = u @ vh
            return p.real.astype(complex) if self.kind == "SO(n)" else p
        if self.kind == "U(1)":
            return g / np.abs(g)
        if self.kind == "Z2":
            return np.sign(g.real).astype(complex)
        return g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n}


def identity_matrix(n: int) -> np.ndarray:
    m = _obj((n, n))
    for k in range(n):
        m[k, k] = ONE
    return m


def expr_matrix(rows) -> np.ndarray:
    rows = [list(r) for r in rows]
    m = _obj((len(rows), len(rows[0])))
    for r, row in enumerate(rows):
        if len(row) != m.shape[1]:
            raise BundleError("ragged matrix")
        for c, e in enumerate(row):
            m[r, c] = as_expr(e)
    return m


def symbolic_inverse(m: np.ndarray, kind: str | None = None) -> np.ndarray:
    """Inverse of a small expression matrix (adjugate over determinant)."""
    n = m.shape[0]
    if kind == "Z2":
        return m.copy()
    if kind == "SO(n)":
        return m.T.copy()
    if n == 1:
        out = _obj((1, 1))
        out[0, 0] = div(ONE, m[0, 0])
        return out
    det = _det(m)
    out = _obj((n, n))
    for r in range(n):
        for c in range(n):
            minor = np.delete(np.delete(m, c, axis=0), r, axis=1)
            cof = _det(minor)
            out[r, c] = div(cof if (r + c) % 2 == 0 else neg(cof), det)
    return out


def _det(m: np.ndarray) -> Expr:
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    if n == 2:
        return sub(mul(m[0, 0], m[1, 1]), mul(m[0, 1], m[1, 0]))
    acc = ZERO
    for c in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), c, axis=1)
        term = mul(m[0, c], _det(minor))
        acc = acc + term if c % 2 == 0 else acc - term
    return acc


def eval_matrix(m: np.ndarray, bindings: dict, npts: int) -> np.ndarray:
    """Evaluate an expression matrix to a stack ``(npts, r, c)``."""
    out = np.empty((npts,) + m.shape, dtype=complex)
    for idx in np.ndindex(*m.shape):
        out[(slice(None),) + idx] = np.broadcast_to(evaluate(m[idx], bindings), (npts,))
    return out


# ---------------------------------------------------------------------------
# bundle data
# ---------------------------------------------------------------------------

FIBERS = ("vector", "principal", "discrete")


@dataclass
class BundleSpec:
    name: str
    atlas: Atlas
    group: GroupDescriptor
    transitions: dict
    fiber: str = "vector"
    field: str = "real"
    tangent: bool = False

    def __post_init__(self):
        if self.fiber not in FIBERS:
            raise BundleError(f"unknown fiber kind {self.fiber!r}")
        n = self.group.n
        trans = {}
        for (i, j), m in self.transitions.items():
            if i != j and (i, j) not in self.atlas.overlaps:
                raise BundleError(f"transition {i},{j} given for non-overlapping charts")
            m = m if isinstance(m, np.ndarray) else expr_matrix(m)
            if m.shape != (n, n):
                raise BundleError(f"transition {i},{j} has shape {m.shape}, expected {(n, n)}")
            allowed = set(self.atlas.chart(i).coordinates) | set(self.atlas.chart(j).coordinates)
            for e in m.flat:
                bad = free_coordinates(e) - allowed
                if bad:
                    raise BundleError(f"transition {i},{j} uses unknown coordinates {sorted(bad)}")
            trans[(i, j)] = m
        for i, j in self.atlas.overlaps:
            if (i, j) not in trans:
                if (j, i) not in trans:
                    raise BundleError(f"no transition for overlap {i},{j}")
                trans[(i, j)] = symbolic_inverse(trans[(j, i)], self.group.kind)
        self.transitions = trans

    @property
    def rank(self) -> int:
        return self.group.n

    def transition(self, i: str, j: str) -> np.ndarray:
        if (i, j) in self.transitions:
            return self.transitions[(i, j)]
        if i == j:
            return identity_matrix(self.rank)
        raise BundleError(f"charts {i} and {j} do not overlap")

    def eval_transition(self, i: str, j: str, points_i) -> np.ndarray:
        """``g_ij`` at points given in chart ``i`` coordinates."""
        pts = np.atleast_2d(np.asarray(points_i, dtype=float))
        b = self.atlas.overlap_bindings(i, j, pts)
        return eval_matrix(self.transition(i, j), b, len(pts))

    def transition_derivative(self, i: str, j: str, points_i) -> np.ndarray:
        """``d g_ij / d x_i^mu`` as ``(npts, dim, n, n)`` (chain rule through ``x_j``)."""
        pts = np.atleast_2d(np.asarray(points_i, dtype=float))
        atlas = self.atlas
        ci = atlas.chart(i)
        g = self.transition(i, j)
        b = atlas.overlap_bindings(i, j, pts)
        dim = atlas.dimension
        partial_i = [eval_matrix(_emap(lambda e: differentiate(e, c), g), b, len(pts))
                     for c in ci.coordinates]
        out = np.stack(partial_i, axis=1)
        if i != j:
            cj = atlas.chart(j)
            jac = atlas.jacobian(i, j, pts, check=False)  # d x_j / d x_i
            for lam, c in enumerate(cj.coordinates):
                dg = eval_matrix(_emap(lambda e: differentiate(e, c), g), b, len(pts))
                for mu in range(dim):
                    out[:, mu] += jac[:, lam, mu, None, None] * dg
        return out

    def to_dict(self) -> dict:
        return {
            "group": self.group.to_dict(),
            "fiber": self.fiber,
            "field": self.field,
            "transitions": {f"{i},{j}": [[str(e) for e in row] for row in m]
                            for (i, j), m in sorted(self.transitions.items())},
        }


def tangent_bundle(atlas: Atlas, name: str | None = None) -> BundleSpec:
    """``TM`` with Jacobian transitions ``g_ij = d x_i / d x_j`` (in ``x_j``)."""
    trans = {}
    for i, j in atlas.overlaps:
        jac = atlas.jacobian_exprs(j, i)
        trans[(i, j)] = expr_matrix(jac)
    return BundleSpec(name or f"T{atlas.name}", atlas, GroupDescriptor("GL(n,R)", atlas.dimension),
                      trans, fiber="vector", field="real", tangent=True)


def trivial_bundle(atlas: Atlas, group: GroupDescriptor, name: str = "trivial",
                   field: str | None = None) -> BundleSpec:
    trans = {k: identity_matrix(group.n) for k in atlas.overlaps}
    return BundleSpec(name, atlas, group, trans,
                      field=field or ("real" if group.is_real else "complex"))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _worst(chart, atlas, pts, res) -> dict | None:
    if len(pts) == 0:
        return None
    k = int(np.argmax(res))
    return worst_point(chart, atlas.chart(chart).coordinates, pts[k])


def _maxres(res) -> float:
    return float(np.max(res)) if len(res) else 0.0


def validate_cocycle(spec: BundleSpec, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                     tol: float = DEFAULT_TOL) -> ValidationReport:
    """Residuals of ``g_ii = e``, ``g_ji = g_ij^-1``, ``g_ij g_jk = g_ik``, membership."""
    atlas = spec.atlas
    rep = ValidationReport(f"cocycle:{spec.name}", samples=samples, seed=seed)
    eye = np.eye(spec.rank)

    best = (0.0, None)
    for i in sorted(atlas.charts):
        if (i, i) not in spec.transitions:
            continue
        pts = atlas.sample_chart(i, samples, seed)
        res = np.max(np.abs(spec.eval_transition(i, i, pts) - eye), axis=(1, 2))
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(i, atlas, pts, res))
    rep.add(Check("identity", best[0], tol, best[1]))

    best = (0.0, None)
    member = (0.0, None)
    for i, j in atlas.overlap_pairs():
        pts = atlas.sample_overlap(i, j, samples, seed)
        if not len(pts):
            continue
        g_ij = spec.eval_transition(i, j, pts)
        pts_j = atlas.overlap_apply(i, j, pts, check=False)
        g_ji = spec.eval_transition(j, i, pts_j)
        res = np.max(np.abs(g_ji @ g_ij - eye), axis=(1, 2))
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(i, atlas, pts, res))
        mres = spec.group.membership_residual(g_ij)
        if _maxres(mres) >= member[0]:
            member = (_maxres(mres), _worst(i, atlas, pts, mres))
    rep.add(Check("inverse", best[0], tol, best[1]))

    best = (0.0, None)
    detail = {}
    for i, j, k in atlas.triple_overlaps():
        pts = atlas.sample_triple(i, j, k, samples, seed)
        if not len(pts):
            continue
        pts_j = atlas.overlap_apply(i, j, pts, check=False)
        g_ij = spec.eval_transition(i, j, pts)
        g_jk = spec.eval_transition(j, k, pts_j)
        g_ik = spec.eval_transition(i, k, pts)
        res = np.max(np.abs(g_ij @ g_jk - g_ik), axis=(1, 2))
        if _maxres(res) >= best[0]:
            w = _worst(i, atlas, pts, res)
            if w is not None:
                w["triple"] = [i, j, k]
            best = (_maxres(res), w)
    if best[1] is not None:
        detail["triple"] = best[1]["triple"]
    rep.add(Check("cocycle", best[0], tol, best[1], detail))
    rep.add(Check("membership", member[0], max(spec.group.tolerance(), 0.0), member[1],
                  {"group": spec.group.label}))
    return rep


def _apply_law(kind: str, g: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Transform chart-``j`` values into chart-``i`` values by ``g = g_ij``."""
    if kind == "scalar":
        return vals
    extra = vals.ndim - 2
    if kind in ("vector", "principal"):
        if extra == 1:
            return np.einsum("pab,pkb->pka", g, vals)
        return np.einsum("pab,pkbc->pkac", g, vals)
    if kind == "adjoint":
        ginv = np.linalg.inv(g)
        return np.einsum("pab,pkbc,pcd->pkad", g, vals, ginv)
    raise BundleError(f"no overlap law for kind {kind!r}")


def family_overlap_residual(spec: BundleSpec, family: FormFamily, name: str,
                            samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                            tol: float = DEFAULT_TOL, kind: str | None = None) -> Check:
    """Worst violation of the family's overlap law over all overlaps."""
    atlas = spec.atlas
    kind = kind or family.kind
    best = (0.0, None)
    pairs = {}
    for i, j in atlas.overlap_pairs():
        if i not in family.forms or j not in family.forms:
            raise BundleError(f"family {name} is missing chart {i if i not in family.forms else j}")
        pts = atlas.sample_overlap(i, j, samples, seed)
        if not len(pts):
            continue
        pts_j = atlas.overlap_apply(i, j, pts, check=False)
        vi = family[i].evaluate(pts)
        vj = transform_components(family[j].evaluate(pts_j), atlas.jacobian(i, j, pts, False),
                                  family.degree)
        g = spec.eval_transition(i, j, pts)
        diff = vi - _apply_law(kind, g, vj)
        res = np.max(np.abs(diff).reshape(len(pts), -1), axis=1) if diff.size else \
            np.zeros(len(pts))
        pairs[f"{i},{j}"] = _maxres(res)
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(i, atlas, pts, res))
    return Check(name, best[0], tol, best[1], {"pairs": pairs})


@dataclass
class Section:
    name: str
    kind: str  # vector | adjoint | principal
    components: dict  # chart -> object array (n,) or (n, n)

    def family(self, atlas: Atlas) -> FormFamily:
        forms = {}
        for c, val in self.components.items():
            arr = val if isinstance(val, np.ndarray) else _values(val)
            forms[c] = LocalForm.build(c, atlas.chart(c).coordinates, 0, arr.shape, {(): arr})
        return FormFamily(forms, "adjoint" if self.kind == "adjoint" else "vector")


def _values(v) -> np.ndarray:
    src = np.asarray(v, dtype=object)
    out = np.empty(src.shape, dtype=object)
    for idx in np.ndindex(*src.shape):
        out[idx] = as_expr(src[idx])
    return out


def check_section(spec: BundleSpec, section: Section, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL) -> ValidationReport:
    n = spec.rank
    expect = (n,) if section.kind == "vector" else (n, n)
    missing = set(spec.atlas.charts) - set(section.components)
    if missing:
        raise BundleError(f"section {section.name} has no components on {sorted(missing)}")
    fam = section.family(spec.atlas)
    if fam.shape != expect:
        raise BundleError(f"section {section.name}: components have shape {fam.shape}, "
                          f"fiber needs {expect}")
    rep = ValidationReport(f"section:{section.name}", samples=samples, seed=seed)
    law = "principal" if section.kind == "principal" else fam.kind
    rep.add(family_overlap_residual(spec, fam, "compatibility", samples, seed, tol, kind=law))
    return rep


@dataclass
class GaugeTransformation:
    name: str
    gamma: dict  # chart -> object matrix acting on components
    kind: str = "neighborhood"  # neighborhood | automorphism
    gamma_inv: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("neighborhood", "automorphism"):
            raise BundleError(f"unknown gauge transformation kind {self.kind!r}")
        self.gamma = {c: m if isinstance(m, np.ndarray) else expr_matrix(m)
                      for c, m in self.gamma.items()}
        self.gamma_inv = {c: m if isinstance(m, np.ndarray) else expr_matrix(m)
                          for c, m in self.gamma_inv.items()}
        for c, m in self.gamma.items():
            if c not in self.gamma_inv:
                self.gamma_inv[c] = symbolic_inverse(m)

    def eval(self, chart: str, bindings, npts: int, inverse: bool = False) -> np.ndarray:
        return eval_matrix((self.gamma_inv if inverse else self.gamma)[chart], bindings, npts)


class GaugeError(BundleError):
    pass


def check_gauge(spec: BundleSpec, gt: GaugeTransformation, samples: int = DEFAULT_SAMPLES,
                seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Membership, stored-inverse consistency and (for automorphisms) the overlap constraint."""
    atlas = spec.atlas
    rep = ValidationReport(f"gauge:{gt.name}", samples=samples, seed=seed)
    missing = set(atlas.charts) - set(gt.gamma)
    if missing:
        raise GaugeError(f"gauge transformation {gt.name} misses charts {sorted(missing)}")
    member = (0.0, None)
    inv = (0.0, None)
    eye = np.eye(spec.rank)
    for c in sorted(atlas.charts):
        pts = atlas.sample_chart(c, samples, seed)
        b = atlas.chart(c).bindings(pts)
        g = gt.eval(c, b, len(pts))
        gi = gt.eval(c, b, len(pts), inverse=True)
        m = spec.group.membership_residual(g)
        r = np.max(np.abs(g @ gi - eye), axis=(1, 2))
        if _maxres(m) >= member[0]:
            member = (_maxres(m), _worst(c, atlas, pts, m))
        if _maxres(r) >= inv[0]:
            inv = (_maxres(r), _worst(c, atlas, pts, r))
    rep.add(Check("membership", member[0], max(spec.group.tolerance(), tol), member[1]))
    rep.add(Check("inverse", inv[0], tol, inv[1]))
    if gt.kind == "automorphism":
        best = (0.0, None)
        for i, j in atlas.overlap_pairs():
            pts = atlas.sample_overlap(i, j, samples, seed)
            if not len(pts):
                continue
            b = atlas.overlap_bindings(i, j, pts)
            g = spec.eval_transition(i, j, pts)
            lhs = gt.eval(i, b, len(pts), inverse=True)
            rhs = g @ gt.eval(j, b, len(pts), inverse=True) @ np.linalg.inv(g)
            res = np.max(np.abs(lhs - rhs), axis=(1, 2))
            if _maxres(res) >= best[0]:
                best = (_maxres(res), _worst(i, atlas, pts, res))
        rep.add(Check("automorphism", best[0], tol, best[1]))
    return rep


def apply_gauge(spec: BundleSpec, gt: GaugeTransformation, samples: int = 64,
                seed: int = DEFAULT_SEED) -> BundleSpec:
    """New transitions ``g'_ij = gamma_i g_ij gamma_j^-1``."""
    rep = check_gauge(spec, gt, samples, seed)
    if not rep["membership"].passed or not rep["inverse"].passed:
        raise GaugeError(f"gauge transformation {gt.name} is not group-valued "
                         f"(residual {rep['membership'].residual:.3g})")
    trans = {}
    for (i, j), g in spec.transitions.items():
        trans[(i, j)] = value_product(value_product(gt.gamma[i], g), gt.gamma_inv[j])
    return replace(spec, name=f"{spec.name}|{gt.name}", transitions=trans)


def transform_section(section: Section, gt: GaugeTransformation) -> Section:
    comps = {}
    for c, val in section.components.items():
        arr = val if isinstance(val, np.ndarray) else _values(val)
        if section.kind == "adjoint":
            comps[c] = value_product(value_product(gt.gamma[c], arr), gt.gamma_inv[c])
        else:
            comps[c] = value_product(gt.gamma[c], arr)
    return Section(f"{section.name}|{gt.name}", section.kind, comps)


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def _same_atlas(a: Atlas, b: Atlas) -> bool:
    return a is b or (a.name == b.name and a.charts == b.charts and
                      set(a.overlaps) == set(b.overlaps))


def whitney_sum(a: BundleSpec, b: BundleSpec) -> BundleSpec:
    """Fiberwise direct sum: block-diagonal transitions."""
    if not _same_atlas(a.atlas, b.atlas):
        raise BundleError(f"Whitney sum needs a common atlas ({a.atlas.name} vs {b.atlas.name})")
    n = a.rank + b.rank
    unitary = a.group.kind in ("U(1)", "U(n)") and b.group.kind in ("U(1)", "U(n)")
    real = a.group.is_real and b.group.is_real
    kind = "U(n)" if unitary else "GL(n,R)" if real else "GL(n,C)"
    trans = {}
    for key in a.atlas.overlaps:
        m = _obj((n, n))
        m[:a.rank, :a.rank] = a.transition(*key)
        m[a.rank:, a.rank:] = b.transition(*key)
        trans[key] = m
    return BundleSpec(f"{a.name}+{b.name}", a.atlas, GroupDescriptor(kind, n), trans,
                      fiber="vector", field="real" if real else "complex")


@dataclass(frozen=True)
class ChartAssignment:
    """Image chart of the base and the map components on one source chart."""

    target_chart: str
    maps: tuple


def pullback_bundle(spec: BundleSpec, source: Atlas, assignment: dict,
                    samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                    name: str | None = None) -> BundleSpec:
    """Bundle over ``source`` with transitions ``g_{a(k) a(l)} o f``."""
    base = spec.atlas
    assign = {}
    for k, (target, maps) in assignment.items():
        maps = tuple(as_expr(m) for m in maps)
        if len(maps) != base.chart(target).dimension:
            raise BundleError(f"map on chart {k} needs {base.chart(target).dimension} components")
        assign[k] = ChartAssignment(target, maps)
    missing = set(source.charts) - set(assign)
    if missing:
        raise BundleError(f"chart-assignment gap: no image chart for {sorted(missing)}")
    for k, ca in assign.items():
        pts = source.sample_chart(k, samples, seed)
        b = source.chart(k).bindings(pts)
        img = np.stack([np.broadcast_to(np.real(evaluate(m, b)), (len(pts),)) for m in ca.maps],
                       axis=1)
        ok = base.chart(ca.target_chart).contains(img)
        if not np.all(ok):
            bad = pts[int(np.argmin(ok))]
            raise BundleError(
                f"chart-assignment gap: point {tuple(bad)} of chart {k} maps outside "
                f"chart {ca.target_chart}")
    trans = {}
    for k, l in source.overlaps:
        ik, il = assign[k].target_chart, assign[l].target_chart
        if ik == il:
            trans[(k, l)] = identity_matrix(spec.rank)
            continue
        if (ik, il) not in base.overlaps:
            raise BundleError(f"charts {k},{l} overlap but their images {ik},{il} do not")
        sub_map = dict(zip(base.chart(ik).coordinates, assign[k].maps))
        sub_map.update(zip(base.chart(il).coordinates, assign[l].maps))
        trans[(k, l)] = _emap(lambda e: substitute(e, sub_map), spec.transition(ik, il))
    return BundleSpec(name or f"pullback({spec.name})", source, spec.group, trans,
                      fiber=spec.fiber, field=spec.field)


# ---------------------------------------------------------------------------
# loop probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hop:
    """Crossing from chart ``source`` into ``target`` at ``point`` (source coordinates)."""

    source: str
    target: str
    point: tuple


def loop_class(spec: BundleSpec, hops, tol: float = DEFAULT_TOL, probe: float = 1e-3):
    """Ordered product ``g_{i1 i2}(p1) g_{i2 i3}(p2) ...`` around a closed itinerary.

    This is the chain of identity sections ``sigma_j = sigma_i g_ij``; for a
    locally constant bundle it is the inverse of the component monodromy, so
    its conjugacy class detects non-triviality.
    """
    hops = [h if isinstance(h, Hop) else Hop(h[0], h[1], tuple(h[2])) for h in hops]
    if not hops:
        raise BundleError("empty itinerary")
    for a, b in zip(hops, hops[1:] + hops[:1]):
        if a.target != b.source:
            raise BundleError(f"itinerary is not closed: {a.source}->{a.target} then "
                              f"{b.source}->{b.target}")
    atlas = spec.atlas
    result = np.eye(spec.rank, dtype=complex)
    for h in hops:
        p = np.asarray(h.point, dtype=float)
        atlas.overlap_apply(h.source, h.target, p)
        probes = [p]
        for mu in range(len(p)):
            for s in (-probe, probe):
                q = p.copy()
                q[mu] += s
                if atlas.in_overlap(h.source, h.target, q[None])[0]:
                    probes.append(q)
        g = spec.eval_transition(h.source, h.target, np.array(probes))
        spread = float(np.max(np.abs(g - g[0])))
        if spread > tol:
            raise BundleError(f"transition {h.source},{h.target} is not locally constant near "
                              f"{tuple(p)} (variation {spread:.3g})")
        result = result @ g[0]
    return result
