"""Independent reference computations shared by the test modules.

Nothing here goes through the package's expression engine: the classical
geometry is done with sympy, the gauge data with plain numpy.
"""

import functools

import numpy as np
import sympy as sp

from bundlekit.bundle import GaugeTransformation, Section
from bundlekit.connection import ConnectionSpec
from bundlekit.forms import LocalForm


@functools.lru_cache(maxsize=None)
def _sphere_symbolic(radius):
    u, v = sp.symbols("u v", real=True)
    x = (u, v)
    conf = 4 * sp.nsimplify(radius) ** 2 / (1 + u ** 2 + v ** 2) ** 2
    g = sp.diag(conf, conf)
    ginv = g.inv()
    G = [[[sp.simplify(sum(ginv[m, s] * (sp.diff(g[s, n], x[l]) + sp.diff(g[s, l], x[n])
                                          - sp.diff(g[n, l], x[s])) for s in range(2)) / 2)
           for l in range(2)] for n in range(2)] for m in range(2)]
    R = [[[[sp.simplify(sp.diff(G[r][s][nu], x[mu]) - sp.diff(G[r][s][mu], x[nu])
                        + sum(G[r][l][mu] * G[l][s][nu] - G[r][l][nu] * G[l][s][mu]
                              for l in range(2)))
            for nu in range(2)] for mu in range(2)] for s in range(2)] for r in range(2)]
    return (u, v), G, R, sp.sqrt(g.det())


def round_sphere(radius: float = 1.0):
    """Christoffels, Riemann tensor and area density of the stereographic round metric.

    Returns numeric callables ``gamma(u, v) -> G[mu, nu, lam]`` (``G^mu_{nu lam}``),
    ``riemann(u, v) -> R[rho, sigma, mu, nu]`` and ``area(u, v)``.
    """
    x, G, R, area = _sphere_symbolic(radius)
    fg = sp.lambdify(x, G, "numpy")
    fr = sp.lambdify(x, R, "numpy")
    fa = sp.lambdify(x, area, "numpy")

    def stack(f, a, b):
        a = np.asarray(a, dtype=float)
        flat = np.broadcast_arrays(*_flatten(f(a, b)), a)[:-1]
        shape = np.shape(np.array(f(0.0, 0.0), dtype=float))
        return np.array(flat).reshape(shape + a.shape)

    return (lambda a, b: stack(fg, a, b), lambda a, b: stack(fr, a, b), fa)


def levi_civita_documents(radius: float = 1.0, charts=(("N", "u", "v"), ("S", "s", "t"))):
    """Connection form documents built from the sympy Christoffels.

    Both stereographic charts carry the same conformal metric, so one set of
    symbols, renamed per chart, serves for each.
    """
    (u, v), G, _, _ = _sphere_symbolic(radius)
    out = {}
    for name, a, b in charts:
        ren = {u: sp.Symbol(a), v: sp.Symbol(b)}
        doc = {}
        for lam, coord in enumerate((a, b)):
            doc[f"d{coord}"] = [[str(G[m][n][lam].subs(ren)).replace("**", "^")
                                 for n in range(2)] for m in range(2)]
        out[name] = doc
    return out


def _flatten(nested):
    if isinstance(nested, (list, tuple)):
        out = []
        for n in nested:
            out += _flatten(n)
        return out
    return [nested]


# -- random periodic gauge data on the torus ---------------------------------

PAULI = [np.array([[0, 1], [1, 0]], dtype=complex),
         np.array([[0, -1j], [1j, 0]], dtype=complex),
         np.array([[1, 0], [0, -1]], dtype=complex)]


def _c(z: complex) -> str:
    return f"({z.real!r} + {z.imag!r}*i)"


def _matrix_strings(m_terms):
    """Sum of ``(complex 2x2 matrix, scalar expression)`` as a string matrix."""
    out = [["0", "0"], ["0", "0"]]
    for mat, expr in m_terms:
        for r in range(2):
            for c in range(2):
                if mat[r, c] != 0:
                    out[r][c] += f" + {_c(complex(mat[r, c]))}*({expr})"
    return out


def _periodic(rng):
    """Template in ``{x}``, ``{y}``; drawn once, then formatted for every chart."""
    a, b, p, q = (float(t) for t in rng.uniform(-1, 1, size=4))
    return f"{a!r}*sin({{x}} + {p!r}) + {b!r}*cos({{y}} + {q!r})"


def _per_chart(atlas, template):
    """Format a nested structure of templates with each chart's coordinate names."""
    def fmt(obj, x, y):
        if isinstance(obj, str):
            return obj.replace("{x}", x).replace("{y}", y)
        return [fmt(o, x, y) for o in obj]
    return {c: fmt(template, *ch.coordinates) for c, ch in atlas.charts.items()}


def random_su2_connection(rng, bundle):
    """Anti-hermitian, traceless connection built from periodic coefficients.

    The same expression in every torus chart is globally consistent because
    the overlap maps only shift coordinates by multiples of 2 pi.
    """
    tmpl = [_matrix_strings([(1j * s, _periodic(rng)) for s in PAULI]) for _ in range(2)]
    forms = {}
    for c, (mx, my) in _per_chart(bundle.atlas, tmpl).items():
        x, y = bundle.atlas.chart(c).coordinates
        forms[c] = LocalForm.from_dict(c, (x, y), {f"d{x}": mx, f"d{y}": my}, (2, 2))
    return ConnectionSpec("random", bundle, forms, "anti-hermitian")


def random_matter(rng, bundle):
    tmpl = [f"{_periodic(rng)} + i*({_periodic(rng)})" for _ in range(2)]
    return Section("phi", "vector", _per_chart(bundle.atlas, tmpl))


def random_unitary_gauge(rng, bundle):
    """``exp(i alpha) * exp(i theta n.sigma)`` with periodic angles, written out in closed form."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ns = sum(a * s for a, s in zip(axis, PAULI))
    th, al = _periodic(rng), _periodic(rng)
    g = _matrix_strings([(np.eye(2), f"cos({th})*exp(i*({al}))"),
                         (1j * ns, f"sin({th})*exp(i*({al}))")])
    gi = _matrix_strings([(np.eye(2), f"cos({th})*exp(-i*({al}))"),
                          (-1j * ns, f"sin({th})*exp(-i*({al}))")])
    return GaugeTransformation("gamma", _per_chart(bundle.atlas, g),
                               gamma_inv=_per_chart(bundle.atlas, gi))


def random_phase_gauge(rng, atlas):
    gamma = {}
    for c, ch in atlas.charts.items():
        x, y = ch.coordinates
        a, b, k = (float(t) for t in rng.uniform(-2, 2, size=3))
        gamma[c] = [[f"exp(i*({a!r}*{x} + {b!r}*{x}*{y} + {k!r}))"]]
    return GaugeTransformation("phase", gamma)
