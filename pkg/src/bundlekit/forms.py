"""Chart-local differential forms with scalar, vector or matrix values.

A k-form on a chart with coordinates ``x^0..x^{n-1}`` is stored as a map from
strictly increasing index tuples ``I`` to value arrays of expressions; the
form is ``sum_I value_I dx^I``.  Only canonical indices are stored, so
antisymmetry holds by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .expr import ZERO, Expr, add, as_expr, differentiate, evaluate, mul, neg, substitute

SCALAR: tuple = ()


class FormError(Exception):
    pass


def _obj(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def _to_values(v, shape) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    src = np.asarray(v, dtype=object) if shape else None
    if shape:
        if src.shape != tuple(shape):
            raise FormError(f"value has shape {src.shape}, expected {tuple(shape)}")
        for idx in np.ndindex(*shape):
            arr[idx] = as_expr(src[idx])
    else:
        arr[()] = as_expr(v)
    return arr


def _emap(fn, *arrays) -> np.ndarray:
    out = np.empty(arrays[0].shape, dtype=object)
    for idx in np.ndindex(*arrays[0].shape):
        out[idx] = fn(*(a[idx] for a in arrays))
    return out


def _is_zero(arr: np.ndarray) -> bool:
    return all(x == ZERO for x in arr.flat)


def value_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Multiply value arrays: scalar * any, matrix @ matrix, matrix @ vector."""
    if a.ndim == 0:
        if b.ndim == 0:
            return _scalar(mul(a[()], b[()]))
        return _emap(lambda y: mul(a[()], y), b)
    if b.ndim == 0:
        return _emap(lambda x: mul(x, b[()]), a)
    if a.ndim == 2 and a.shape[1] == b.shape[0]:
        if b.ndim == 2:
            out = _obj((a.shape[0], b.shape[1]))
            for r in range(a.shape[0]):
                for c in range(b.shape[1]):
                    acc = ZERO
                    for k in range(a.shape[1]):
                        acc = add(acc, mul(a[r, k], b[k, c]))
                    out[r, c] = acc
            return out
        out = _obj((a.shape[0],))
        for r in range(a.shape[0]):
            acc = ZERO
            for k in range(a.shape[1]):
                acc = add(acc, mul(a[r, k], b[k]))
            out[r] = acc
        return out
    raise FormError(f"cannot multiply values of shapes {a.shape} and {b.shape}")


def _scalar(e: Expr) -> np.ndarray:
    arr = np.empty((), dtype=object)
    arr[()] = e
    return arr


def _product_shape(sa, sb):
    if not sa:
        return tuple(sb)
    if not sb:
        return tuple(sa)
    if len(sa) == 2 and sa[1] == sb[0]:
        return (sa[0],) + tuple(sb[1:])
    raise FormError(f"cannot multiply values of shapes {sa} and {sb}")


def _merge_sign(I, J):
    """Sign of the permutation sorting I+J, or 0 if they share an index."""
    if set(I) & set(J):
        return 0, None
    seq = list(I) + list(J)
    inv = sum(1 for x in range(len(seq)) for y in range(x + 1, len(seq)) if seq[x] > seq[y])
    return (-1) ** inv, tuple(sorted(seq))


def multi_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(dim), degree))


@dataclass(frozen=True)
class LocalForm:
    chart: str
    coordinates: tuple[str, ...]
    degree: int
    shape: tuple[int, ...]
    components: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.degree < 0:
            raise FormError("negative degree")
        if len(self.shape) > 2:
            raise FormError("values are scalars, vectors or matrices")
        for I, val in self.components.items():
            if len(I) != self.degree or list(I) != sorted(set(I)) or \
                    any(not 0 <= k < self.dim for k in I):
                raise FormError(f"non-canonical multi-index {I} for a {self.degree}-form")
            if val.shape != self.shape:
                raise FormError(f"component {I} has shape {val.shape}, expected {self.shape}")

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    # construction ---------------------------------------------------------

    @classmethod
    def zero(cls, chart, coordinates, degree, shape=SCALAR) -> "LocalForm":
        return cls(chart, tuple(coordinates), degree, tuple(shape), {})

    @classmethod
    def build(cls, chart, coordinates, degree, shape, comps) -> "LocalForm":
        """Components given as ``{index tuple: value}``, zero entries dropped."""
        clean = {}
        for I, v in comps.items():
            arr = v if isinstance(v, np.ndarray) and v.dtype == object else _to_values(v, shape)
            if not _is_zero(arr):
                clean[tuple(I)] = arr
        return cls(chart, tuple(coordinates), degree, tuple(shape), clean)

    @classmethod
    def from_dict(cls, chart, coordinates, doc: dict, shape=SCALAR,
                  degree: int | None = None) -> "LocalForm":
        """Parse ``{"dx^dy": value, ...}``; ``"1"`` is the key of a 0-form."""
        coordinates = tuple(coordinates)
        comps = {}
        deg = degree
        for key, v in doc.items():
            I, sign = parse_index(key, coordinates)
            if deg is None:
                deg = len(I)
            elif len(I) != deg:
                raise FormError(f"mixed degrees in form on chart {chart}")
            arr = _to_values(v, shape)
            if sign < 0:
                arr = _emap(neg, arr)
            if I in comps:
                arr = _emap(add, comps[I], arr)
            comps[I] = arr
        return cls.build(chart, coordinates, deg or 0, shape, comps)

    def to_dict(self) -> dict:
        out = {}
        for I in sorted(self.components):
            key = "^".join("d" + self.coordinates[k] for k in I) if I else "1"
            val = self.components[I]
            out[key] = _json_values(val)
        return out

    def component(self, I) -> np.ndarray:
        I = tuple(I)
        return self.components.get(I, _obj(self.shape))

    # arithmetic -----------------------------------------------------------

    def _like(self, comps, degree=None, shape=None) -> "LocalForm":
        return LocalForm.build(self.chart, self.coordinates,
                               self.degree if degree is None else degree,
                               self.shape if shape is None else shape, comps)

    def _check_same(self, other: "LocalForm"):
        if other.chart != self.chart or other.coordinates != self.coordinates:
            raise FormError(f"forms live on different charts ({self.chart}, {other.chart})")

    def __add__(self, other: "LocalForm") -> "LocalForm":
        self._check_same(other)
        if other.degree != self.degree or other.shape != self.shape:
            raise FormError("adding forms of different degree or shape")
        comps = dict(self.components)
        for I, v in other.components.items():
            comps[I] = _emap(add, comps[I], v) if I in comps else v
        return self._like(comps)

    def __neg__(self) -> "LocalForm":
        return self._like({I: _emap(neg, v) for I, v in self.components.items()})

    def __sub__(self, other: "LocalForm") -> "LocalForm":
        return self + (-other)

    def scale(self, factor) -> "LocalForm":
        f = as_expr(factor)
        return self._like({I: _emap(lambda x: mul(f, x), v) for I, v in self.components.items()})

    def map_values(self, fn, shape=None) -> "LocalForm":
        """Apply ``fn`` (value array -> value array) to every component."""
        return self._like({I: fn(v) for I, v in self.components.items()},
                          shape=self.shape if shape is None else shape)

    def __matmul__(self, other):
        return wedge(self, other)

    # numerics ---------------------------------------------------------------

    def evaluate(self, points) -> np.ndarray:
        """Values at chart points: array ``(npts, ncomp, *shape)``.

        Components are ordered as :func:`multi_indices`.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        b = {c: pts[:, k] for k, c in enumerate(self.coordinates)}
        idx = multi_indices(self.dim, self.degree)
        out = np.zeros((len(pts), len(idx)) + self.shape, dtype=complex)
        for n, I in enumerate(idx):
            val = self.components.get(I)
            if val is None:
                continue
            for slot in np.ndindex(*self.shape):
                if val[slot] != ZERO:
                    out[(slice(None), n) + slot] = evaluate(val[slot], b)
        return out

    def max_abs(self, points) -> float:
        vals = self.evaluate(points)
        return float(np.max(np.abs(vals))) if vals.size else 0.0


def _json_values(val):
    if isinstance(val, np.ndarray):
        return str(val[()]) if val.ndim == 0 else [_json_values(v) for v in val]
    return str(val)


def parse_index(key: str, coordinates) -> tuple[tuple[int, ...], int]:
    """``"dx^dy"`` -> ((0, 1), +1); returns the sorting sign."""
    key = key.replace(" ", "")
    if key in ("", "1"):
        return (), 1
    parts = key.split("^")
    idx = []
    for p in parts:
        if not p.startswith("d") or p[1:] not in coordinates:
            raise FormError(f"bad differential {p!r} (coordinates {list(coordinates)})")
        idx.append(list(coordinates).index(p[1:]))
    if len(set(idx)) != len(idx):
        raise FormError(f"repeated differential in {key!r}")
    sign, I = _merge_sign(idx, ())
    return I, sign


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def exterior_derivative(f: LocalForm) -> LocalForm:
    """Symbolic d, component by component."""
    comps: dict = {}
    for I, val in f.components.items():
        for mu in range(f.dim):
            if mu in I:
                continue
            dval = _emap(lambda e: differentiate(e, f.coordinates[mu]), val)
            if _is_zero(dval):
                continue
            sign = (-1) ** sum(1 for k in I if k < mu)
            K = tuple(sorted(I + (mu,)))
            if sign < 0:
                dval = _emap(neg, dval)
            comps[K] = _emap(add, comps[K], dval) if K in comps else dval
    return f._like(comps, degree=f.degree + 1)


def wedge(a: LocalForm, b: LocalForm) -> LocalForm:
    """Graded wedge product; values multiply as scalar, matrix or matrix-vector."""
    a._check_same(b)
    shape = _product_shape(a.shape, b.shape)
    comps: dict = {}
    for I, va in a.components.items():
        for J, vb in b.components.items():
            sign, K = _merge_sign(I, J)
            if not sign:
                continue
            val = value_product(va, vb)
            if sign < 0:
                val = _emap(neg, val)
            comps[K] = _emap(add, comps[K], val) if K in comps else val
    return a._like(comps, degree=a.degree + b.degree, shape=shape)


def bracket_wedge(a: LocalForm, b: LocalForm) -> LocalForm:
    """``a [^] b = a^b - (-1)^(deg a deg b) b^a`` for matrix-valued forms."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise FormError("bracket wedge needs matrix-valued forms")
    ab = wedge(a, b)
    ba = wedge(b, a)
    return ab - ba if (a.degree * b.degree) % 2 == 0 else ab + ba


def pullback(f: LocalForm, maps, coordinates, chart: str | None = None) -> LocalForm:
    """Pull ``f`` back along ``y = maps(x)``.

    ``maps`` gives one expression per coordinate of ``f``'s chart in terms of
    ``coordinates`` (an :class:`~bundlekit.geometry.OverlapMap` works too).
    """
    if hasattr(maps, "maps"):
        chart = chart or maps.source
        maps = maps.maps
    maps = tuple(as_expr(m) for m in maps)
    coordinates = tuple(coordinates)
    if len(maps) != f.dim:
        raise FormError("pullback map has the wrong number of components")
    if f.degree > len(coordinates):
        raise FormError("form degree exceeds the source dimension")
    chart = chart or "pullback"
    sub_map = dict(zip(f.coordinates, maps))
    dy = [LocalForm.build(chart, coordinates, 1, SCALAR,
                          {(i,): differentiate(m, c) for i, c in enumerate(coordinates)})
          for m in maps]
    result = LocalForm.zero(chart, coordinates, f.degree, f.shape)
    for I, val in f.components.items():
        basis = LocalForm.build(chart, coordinates, 0, SCALAR, {(): 1.0})
        for k in I:
            basis = wedge(basis, dy[k])
        newval = _emap(lambda e: substitute(e, sub_map), val)
        term = LocalForm.build(chart, coordinates, 0, f.shape, {(): newval})
        result = result + wedge(basis, term)
    return result


def exterior_derivative_fd(f: LocalForm, points, h: float = 1e-5) -> np.ndarray:
    """Central-difference d, for cross-checking the symbolic one."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx_out = multi_indices(f.dim, f.degree + 1)
    idx_in = {I: n for n, I in enumerate(multi_indices(f.dim, f.degree))}
    grads = []
    for mu in range(f.dim):
        step = np.zeros(f.dim)
        step[mu] = h
        grads.append((f.evaluate(pts + step) - f.evaluate(pts - step)) / (2 * h))
    out = np.zeros((len(pts), len(idx_out)) + f.shape, dtype=complex)
    for n, K in enumerate(idx_out):
        for pos, mu in enumerate(K):
            I = K[:pos] + K[pos + 1:]
            out[:, n] += (-1) ** pos * grads[mu][:, idx_in[I]]
    return out


def transform_components(values: np.ndarray, jac: np.ndarray, degree: int) -> np.ndarray:
    """Re-express form components along a coordinate change.

    ``values`` are components in chart ``j`` (``(npts, ncomp, *shape)``),
    ``jac`` is ``d x_j / d x_i`` (``(npts, n, n)``); returns components in
    chart ``i``: ``w_i[I] = sum_J w_j[J] det(jac[J, I])``.
    """
    n = jac.shape[-1]
    idx = multi_indices(n, degree)
    out = np.zeros_like(values)
    extra = values.ndim - 2
    for a, I in enumerate(idx):
        for b, J in enumerate(idx):
            if degree == 0:
                minor = np.ones(len(jac))
            else:
                minor = np.linalg.det(jac[:, list(J)][:, :, list(I)])
            out[:, a] += minor.reshape((-1,) + (1,) * extra) * values[:, b]
    return out


@dataclass(frozen=True)
class FormFamily:
    """One local form per trivializing neighborhood, with an overlap law."""

    forms: dict
    kind: str  # "vector" | "adjoint" | "connection" | "scalar"

    KINDS = ("vector", "adjoint", "connection", "scalar")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise FormError(f"unknown family kind {self.kind!r}")
        shapes = {(f.degree, f.shape) for f in self.forms.values()}
        if len(shapes) > 1:
            raise FormError("family members differ in degree or value shape")

    @property
    def degree(self) -> int:
        return next(iter(self.forms.values())).degree

    @property
    def shape(self) -> tuple:
        return next(iter(self.forms.values())).shape

    def __getitem__(self, chart: str) -> LocalForm:
        return self.forms[chart]

    def map(self, fn) -> "FormFamily":
        return FormFamily({c: fn(f) for c, f in self.forms.items()}, self.kind)
