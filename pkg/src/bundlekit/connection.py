"""Connections as chart-wise matrix-valued 1-forms, and what they induce.

``Gamma_i`` acts on fiber components; parallel transport solves
``dv/dt = -Gamma_i(dC/dt) v``.  Across overlaps::

    Gamma_i = g_ij Gamma_j g_ij^-1 + g_ij d(g_ij^-1)

On the tangent bundle the matrix entry ``(mu, nu)`` of ``Gamma`` carries the
Christoffel symbol ``Gamma^mu_{nu lam}`` on ``dx^lam`` (form index last), and
torsion is ``T = d theta + Gamma ^ theta``.  For example ``Gamma^x_{xy} = 1``
alone on a flat chart gives ``T^x = dy ^ dx = -dx ^ dy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import (BundleError, BundleSpec, GaugeTransformation, _maxres,
                     _worst, apply_gauge, family_overlap_residual)
from .expr import Num, mul
from .forms import (FormFamily, LocalForm, _emap, _obj, bracket_wedge, exterior_derivative,
                    transform_components, wedge)
from .geometry import DEFAULT_SAMPLES, DEFAULT_SEED
from .report import Check, ValidationReport

CONNECTION_TOL = 1e-8
ALGEBRA_TOL = 1e-9
ALGEBRA_CHECKS = ("antisymmetric", "anti-hermitian", "none")


class ConnectionError_(BundleError):
    pass


@dataclass
class ConnectionSpec:
    name: str
    bundle: BundleSpec
    forms: dict  # chart -> matrix-valued 1-form
    algebra: str = "none"
    torsion_free: bool | None = None

    def __post_init__(self):
        n = self.bundle.rank
        if self.algebra not in ALGEBRA_CHECKS:
            raise ConnectionError_(f"unknown algebra check {self.algebra!r}")
        for c in self.bundle.atlas.charts:
            if c not in self.forms:
                raise ConnectionError_(f"connection {self.name} has no form on chart {c}")
        for c, f in self.forms.items():
            if f.degree != 1 or f.shape != (n, n):
                raise ConnectionError_(
                    f"connection form on {c} must be a {n}x{n} matrix 1-form")

    @property
    def family(self) -> FormFamily:
        return FormFamily(self.forms, "connection")

    def __getitem__(self, chart: str) -> LocalForm:
        return self.forms[chart]


@dataclass
class GaugeField:
    """Potential ``A`` with coupling ``q``; the connection is ``Gamma = -i q A``."""

    name: str
    bundle: BundleSpec
    potential: dict  # chart -> matrix-valued 1-form
    q: float = 1.0
    unitary: bool = True

    def connection(self) -> ConnectionSpec:
        factor = _cnum(-1j * self.q)
        forms = {c: a.map_values(lambda v: _emap(lambda e: mul(factor, e), v))
                 for c, a in self.potential.items()}
        algebra = "anti-hermitian" if self.unitary else "none"
        return ConnectionSpec(self.name, self.bundle, forms, algebra)


def _cnum(z: complex):
    """Expression for a complex constant."""
    from .expr import Const, add
    z = complex(z)
    re = Num(z.real)
    if z.imag == 0:
        return re
    im = mul(Num(z.imag), Const("i"))
    return add(re, im) if z.real else im


def zero_connection(bundle: BundleSpec, name: str = "flat") -> ConnectionSpec:
    n = bundle.rank
    forms = {c: LocalForm.zero(c, ch.coordinates, 1, (n, n))
             for c, ch in bundle.atlas.charts.items()}
    return ConnectionSpec(name, bundle, forms)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def _algebra_residual(kind: str, vals: np.ndarray) -> np.ndarray:
    """``vals``: (npts, ncomp, n, n)."""
    if kind == "antisymmetric":
        d = vals + np.swapaxes(vals, -1, -2)
        d = np.maximum(np.abs(d), np.abs(vals.imag))
    elif kind == "anti-hermitian":
        d = np.abs(vals + np.conj(np.swapaxes(vals, -1, -2)))
    else:
        return np.zeros(len(vals))
    return np.max(d.reshape(len(vals), -1), axis=1) if d.size else np.zeros(len(vals))


def connection_overlap_check(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED, tol: float = CONNECTION_TOL) -> Check:
    spec = conn.bundle
    atlas = spec.atlas
    best = (0.0, None)
    pairs = {}
    for i, j in atlas.overlap_pairs():
        pts = atlas.sample_overlap(i, j, samples, seed)
        if not len(pts):
            continue
        pts_j = atlas.overlap_apply(i, j, pts, check=False)
        gam_i = conn[i].evaluate(pts)
        gam_j = transform_components(conn[j].evaluate(pts_j), atlas.jacobian(i, j, pts, False), 1)
        g = spec.eval_transition(i, j, pts)
        ginv = np.linalg.inv(g)
        dg = spec.transition_derivative(i, j, pts)
        expected = np.einsum("pab,pmbc,pcd->pmad", g, gam_j, ginv) - \
            np.einsum("pmab,pbc->pmac", dg, ginv)
        res = np.max(np.abs(gam_i - expected).reshape(len(pts), -1), axis=1)
        pairs[f"{i},{j}"] = _maxres(res)
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(i, atlas, pts, res))
    return Check("connection-overlap", best[0], tol, best[1], {"pairs": pairs})


def algebra_check(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED, tol: float = ALGEBRA_TOL) -> Check:
    atlas = conn.bundle.atlas
    best = (0.0, None)
    for c in sorted(atlas.charts):
        pts = atlas.sample_chart(c, samples, seed)
        res = _algebra_residual(conn.algebra, conn[c].evaluate(pts))
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(c, atlas, pts, res))
    return Check("algebra", best[0], tol, best[1], {"kind": conn.algebra})


def check_connection(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                     seed: int = DEFAULT_SEED, tol: float = CONNECTION_TOL) -> ValidationReport:
    rep = ValidationReport(f"connection:{conn.name}", samples=samples, seed=seed)
    rep.add(connection_overlap_check(conn, samples, seed, tol))
    rep.add(algebra_check(conn, samples, seed))
    return rep


def _chart_max(family_or_forms, atlas, samples, seed, name, tol) -> Check:
    forms = family_or_forms.forms if isinstance(family_or_forms, FormFamily) else family_or_forms
    best = (0.0, None)
    for c in sorted(forms):
        pts = atlas.sample_chart(c, samples, seed)
        vals = forms[c].evaluate(pts)
        res = np.max(np.abs(vals).reshape(len(pts), -1), axis=1) if vals.size else \
            np.zeros(len(pts))
        if _maxres(res) >= best[0]:
            best = (_maxres(res), _worst(c, atlas, pts, res))
    return Check(name, best[0], tol, best[1])


# ---------------------------------------------------------------------------
# gauge transformations
# ---------------------------------------------------------------------------

def _zero_form(chart, coords, mat) -> LocalForm:
    return LocalForm.build(chart, coords, 0, mat.shape, {(): mat})


def gauge_transform_connection(conn: ConnectionSpec, gt: GaugeTransformation,
                               samples: int = 64, seed: int = DEFAULT_SEED) -> ConnectionSpec:
    """``Gamma'_i = gamma_i Gamma_i gamma_i^-1 + gamma_i d(gamma_i^-1)`` on the gauged bundle."""
    bundle = apply_gauge(conn.bundle, gt, samples, seed)
    forms = {}
    for c, gam in conn.forms.items():
        if gt.gamma[c].shape != (bundle.rank, bundle.rank):
            raise ConnectionError_(f"gauge matrix on {c} has the wrong shape")
        g0 = _zero_form(c, gam.coordinates, gt.gamma[c])
        gi0 = _zero_form(c, gam.coordinates, gt.gamma_inv[c])
        forms[c] = wedge(wedge(g0, gam), gi0) + wedge(g0, exterior_derivative(gi0))
    return ConnectionSpec(f"{conn.name}|{gt.name}", bundle, forms, conn.algebra,
                          conn.torsion_free)


def gauge_transform_potential(gf: GaugeField, gt: GaugeTransformation) -> GaugeField:
    conn = gauge_transform_connection(gf.connection(), gt)
    factor = _cnum(1j / gf.q)
    pot = {c: f.map_values(lambda v: _emap(lambda e: mul(factor, e), v))
           for c, f in conn.forms.items()}
    return GaugeField(conn.name, conn.bundle, pot, gf.q, gf.unitary)


# ---------------------------------------------------------------------------
# curvature and covariant derivatives
# ---------------------------------------------------------------------------

def curvature(conn: ConnectionSpec, form: str = "wedge") -> FormFamily:
    """``R = dGamma + Gamma^Gamma`` (or ``dGamma + 1/2 Gamma[^]Gamma``)."""
    forms = {}
    for c, gam in conn.forms.items():
        d = exterior_derivative(gam)
        if form == "wedge":
            forms[c] = d + wedge(gam, gam)
        elif form == "bracket":
            forms[c] = d + bracket_wedge(gam, gam).scale(0.5)
        else:
            raise ValueError(f"unknown curvature form {form!r}")
    return FormFamily(forms, "adjoint")


def structure_equation_check(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED, tol: float = 1e-10) -> Check:
    r1 = curvature(conn, "wedge")
    r2 = curvature(conn, "bracket")
    diff = {c: r1[c] - r2[c] for c in r1.forms}
    chk = _chart_max(diff, conn.bundle.atlas, samples, seed, "structure-equation", tol)
    return chk


def curvature_overlap_check(conn: ConnectionSpec, R: FormFamily | None = None,
                            samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                            tol: float = CONNECTION_TOL) -> Check:
    R = R or curvature(conn)
    return family_overlap_residual(conn.bundle, R, "curvature-overlap", samples, seed, tol)


def field_strength(gf: GaugeField) -> FormFamily:
    """``F = dA - i q A^A``."""
    factor = _cnum(-1j * gf.q)
    forms = {}
    for c, a in gf.potential.items():
        aa = wedge(a, a).map_values(lambda v: _emap(lambda e: mul(factor, e), v))
        forms[c] = exterior_derivative(a) + aa
    return FormFamily(forms, "adjoint")


def field_strength_consistency(gf: GaugeField, samples: int = DEFAULT_SAMPLES,
                               seed: int = DEFAULT_SEED, tol: float = 1e-10) -> Check:
    """``R = -i q F`` with ``R`` the curvature of ``Gamma = -i q A``."""
    F = field_strength(gf)
    R = curvature(gf.connection())
    factor = _cnum(-1j * gf.q)
    diff = {c: R[c] - F[c].map_values(lambda v: _emap(lambda e: mul(factor, e), v))
            for c in F.forms}
    return _chart_max(diff, gf.bundle.atlas, samples, seed, "field-strength", tol)


def covariant_derivative(family: FormFamily, conn: ConnectionSpec) -> FormFamily:
    """``D phi = d phi + Gamma ^ phi`` (vector) or ``dTheta + Gamma [^] Theta`` (adjoint)."""
    if family.kind not in ("vector", "adjoint"):
        raise ConnectionError_(f"cannot covariantly differentiate a {family.kind} family")
    forms = {}
    for c, f in family.forms.items():
        gam = conn[c]
        if family.kind == "vector":
            forms[c] = exterior_derivative(f) + wedge(gam, f)
        else:
            forms[c] = exterior_derivative(f) + bracket_wedge(gam, f)
    return FormFamily(forms, family.kind)


def second_bianchi_forms(conn: ConnectionSpec, R: FormFamily | None = None) -> dict:
    R = R or curvature(conn)
    return {c: exterior_derivative(R[c]) + bracket_wedge(conn[c], R[c]) for c in R.forms}


def second_bianchi_residual(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                            seed: int = DEFAULT_SEED) -> float:
    """Max of ``|dR + Gamma[^]R|`` over chart samples."""
    return second_bianchi_check(conn, samples, seed).residual


def second_bianchi_check(conn, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED, tol=CONNECTION_TOL,
                         R=None) -> Check:
    return _chart_max(second_bianchi_forms(conn, R), conn.bundle.atlas, samples, seed,
                      "bianchi-2", tol)


# ---------------------------------------------------------------------------
# tangent bundle: solder form and torsion
# ---------------------------------------------------------------------------

def _require_tangent(bundle: BundleSpec):
    if not bundle.tangent:
        raise ConnectionError_(f"{bundle.name} is not a tangent bundle with Jacobian transitions")


def solder_form(bundle: BundleSpec) -> FormFamily:
    """Coordinate dual frame ``theta_i = (dx^1, ..., dx^n)`` on every chart."""
    _require_tangent(bundle)
    forms = {}
    for c, ch in bundle.atlas.charts.items():
        n = ch.dimension
        comps = {}
        for mu in range(n):
            val = _obj((n,))
            val[mu] = Num(1.0)
            comps[(mu,)] = val
        forms[c] = LocalForm.build(c, ch.coordinates, 1, (n,), comps)
    return FormFamily(forms, "vector")


def torsion(conn: ConnectionSpec) -> FormFamily:
    """``T = d theta + Gamma ^ theta``."""
    _require_tangent(conn.bundle)
    theta = solder_form(conn.bundle)
    return FormFamily({c: exterior_derivative(theta[c]) + wedge(conn[c], theta[c])
                       for c in theta.forms}, "vector")


def first_bianchi_forms(conn: ConnectionSpec) -> dict:
    T = torsion(conn)
    R = curvature(conn)
    theta = solder_form(conn.bundle)
    return {c: exterior_derivative(T[c]) + wedge(conn[c], T[c]) - wedge(R[c], theta[c])
            for c in T.forms}


def first_bianchi_residual(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                           seed: int = DEFAULT_SEED) -> float:
    """Max of ``|dT + Gamma^T - R^theta|`` over chart samples."""
    return first_bianchi_check(conn, samples, seed).residual


def first_bianchi_check(conn, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED, tol=1e-10) -> Check:
    return _chart_max(first_bianchi_forms(conn), conn.bundle.atlas, samples, seed,
                      "bianchi-1", tol)


def torsion_checks(conn: ConnectionSpec, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED) -> list:
    spec = conn.bundle
    theta = solder_form(spec)
    T = torsion(conn)
    out = [family_overlap_residual(spec, theta, "solder-overlap", samples, seed, 1e-9),
           family_overlap_residual(spec, T, "torsion-overlap", samples, seed, CONNECTION_TOL)]
    norm = _chart_max(T, spec.atlas, samples, seed, "torsion", 1e-9)
    if not conn.torsion_free:
        norm.status_override = True
        norm.detail["note"] = "magnitude only; connection not declared torsion-free"
    out.append(norm)
    out.append(first_bianchi_check(conn, samples, seed, 1e-8))
    return out


def validate_connection(conn: ConnectionSpec, samples: int = DEFAULT_SAMPLES,
                        seed: int = DEFAULT_SEED, tol: float = CONNECTION_TOL) -> ValidationReport:
    """Every law this connection is subject to, in one report."""
    rep = check_connection(conn, samples, seed, tol)
    R = curvature(conn)
    rep.add(structure_equation_check(conn, samples, seed))
    rep.add(curvature_overlap_check(conn, R, samples, seed, tol))
    rep.add(second_bianchi_check(conn, samples, seed, tol, R))
    if conn.bundle.tangent:
        for chk in torsion_checks(conn, samples, seed):
            rep.add(chk)
    return rep
