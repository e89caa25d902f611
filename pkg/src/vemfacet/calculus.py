"""Quadrature, low-degree polynomial fields and the first-order differential operators.

Operators follow the usual 2D/3D conventions::

    div_F v = d1 v1 + d2 v2        rot_F v = -d2 v1 + d1 v2        curl_F p = (d2 p, -d1 p)
    div v   = d1 v1 + d2 v2 + d3 v3
    curl v  = (d2 v3 - d3 v2, d3 v1 - d1 v3, d1 v2 - d2 v1)

On a face of a 3D element, ``d1, d2`` are derivatives along the in-plane
frame axes, which is right-handed with respect to the outward normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from math import ceil, factorial
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh.geometry import FaceGeometry, PolygonGeometry, PolyhedronGeometry
from .mesh.submesh import SimplexSubmesh, submesh_for

MAX_DEGREE = 10
MAX_POLY_DEGREE = 2


class QuadratureError(ValueError):
    pass


class OperatorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature


def _check_degree(degree: int) -> int:
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise QuadratureError(f"quadrature degree {degree} unsupported (0..{MAX_DEGREE})")
    return degree


@lru_cache(maxsize=None)
def line_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1]: points (n,), weights summing to 1."""
    degree = _check_degree(degree)
    n = max(1, ceil((degree + 1) / 2))
    x, w = roots_legendre(n)
    return 0.5 * (x + 1), 0.5 * w


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the reference simplex.

    Returns barycentric coordinates ``(n, dim + 1)`` and weights summing to 1,
    exact for polynomials of total degree ``degree``.
    """
    degree = _check_degree(degree)
    n = max(1, ceil((degree + 1) / 2))
    if dim == 1:
        x, w = line_rule(degree)
        return np.stack([1 - x, x], axis=1), w
    # Duffy collapse: the k-th coordinate carries the Jacobi weight (1 - t)^(dim - k)
    rules = []
    for k in range(dim):
        a = dim - 1 - k
        t, w = roots_jacobi(n, a, 0)
        rules.append((0.5 * (t + 1), w / 2 ** (a + 1)))
    pts, wts = [], []
    for combo in product(*[range(n)] * dim):
        ts = [rules[k][0][combo[k]] for k in range(dim)]
        w = np.prod([rules[k][1][combo[k]] for k in range(dim)])
        lam = np.zeros(dim + 1)
        rest = 1.0
        for k in range(dim):
            lam[k + 1] = rest * ts[k]
            rest *= 1 - ts[k]
        lam[0] = rest
        pts.append(lam)
        wts.append(w)
    wts = np.array(wts)
    return np.array(pts), wts / wts.sum()


def simplex_quadrature(points: np.ndarray, simplices: np.ndarray, degree: int):
    """Physical quadrature points ``(m, q, d)`` and weights ``(m, q)`` on a set of simplices."""
    lam, w = simplex_rule(simplices.shape[1] - 1, degree)
    verts = points[simplices]  # (m, k+1, d)
    x = np.einsum("qk,mkd->mqd", lam, verts)
    k = simplices.shape[1] - 1
    if k == points.shape[1]:
        vol = np.abs(np.linalg.det(verts[:, 1:] - verts[:, :1])) / factorial(k)
    elif k == 1:
        vol = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
    else:
        vol = 0.5 * np.linalg.norm(np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]), axis=1)
    return x, vol[:, None] * w[None, :]


# ---------------------------------------------------------------------------
# polynomial fields


@lru_cache(maxsize=None)
def monomials(dim: int, degree: int = MAX_POLY_DEGREE) -> tuple[tuple[int, ...], ...]:
    out = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    return tuple(sorted(out, key=lambda e: (sum(e), tuple(-x for x in e))))


def _monomial_values(dim: int, y: np.ndarray) -> np.ndarray:
    exps = np.array(monomials(dim))
    return np.prod(y[:, None, :] ** exps[None, :, :], axis=2)


@lru_cache(maxsize=None)
def _fit_nodes(dim: int, degree: int) -> np.ndarray:
    """Principal lattice of order ``degree`` on the unit simplex (unisolvent for P_degree)."""
    k = max(degree, 1)
    pts = [np.array(e) / k for e in product(range(k + 1), repeat=dim) if sum(e) <= k]
    return np.array(pts, dtype=float) - 1.0 / (dim + 1)


@dataclass(frozen=True, eq=False)
class PolyField:
    """Scalar or vector polynomial of total degree <= 2 around a center point.

    ``coef`` has shape ``shape + (n_monomials,)`` with monomials in the
    centered coordinates ``y = x - center`` ordered by :func:`monomials`.
    """

    dim: int
    coef: np.ndarray
    center: np.ndarray
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        nm = len(monomials(self.dim))
        if coef.shape != tuple(self.shape) + (nm,):
            raise ValueError(f"coefficient table shape {coef.shape} does not match {tuple(self.shape) + (nm,)}")
        if not np.isfinite(coef).all():
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(self.dim))
        object.__setattr__(self, "shape", tuple(self.shape))

    # constructors -----------------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, shape=(), center=None) -> "PolyField":
        center = np.zeros(dim) if center is None else center
        return cls(dim, np.zeros(tuple(shape) + (len(monomials(dim)),)), center, tuple(shape))

    @classmethod
    def constant(cls, value, dim: int, center=None) -> "PolyField":
        value = np.asarray(value, dtype=float)
        f = cls.zero(dim, value.shape, center)
        coef = f.coef.copy()
        coef[..., 0] = value
        return cls(dim, coef, f.center, value.shape)

    @classmethod
    def affine(cls, A, b, center) -> "PolyField":
        """``b + A (x - center)``; ``A`` is (k, d) for vector fields or (d,) for scalars."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        dim = A.shape[-1]
        f = cls.constant(b, dim, center)
        coef = f.coef.copy()
        coef[..., 1 : dim + 1] = A
        return cls(dim, coef, f.center, b.shape)

    @classmethod
    def identity(cls, center) -> "PolyField":
        """The centered position field ``x - center``."""
        center = np.asarray(center, dtype=float)
        d = len(center)
        return cls.affine(np.eye(d), np.zeros(d), center)

    @classmethod
    def perp(cls, center) -> "PolyField":
        """The 2D field ``(y_c - y, x - x_c)``."""
        return cls.affine([[0.0, -1.0], [1.0, 0.0]], [0.0, 0.0], center)

    @classmethod
    def random(cls, dim: int, shape, degree: int, rng: np.random.Generator, center=None) -> "PolyField":
        f = cls.zero(dim, shape, center)
        degs = np.array([sum(e) for e in monomials(dim)])
        coef = rng.standard_normal(f.coef.shape) * (degs <= degree)
        return cls(dim, coef, f.center, tuple(shape))

    @classmethod
    def fit(cls, func: Callable, dim: int, shape, degree: int, center, scale: float = 1.0) -> "PolyField":
        """Interpolate ``func`` on a unisolvent lattice; exact when ``func`` is a polynomial of that degree."""
        if degree > MAX_POLY_DEGREE:
            raise ValueError(f"polynomial degree {degree} exceeds {MAX_POLY_DEGREE}")
        center = np.asarray(center, dtype=float)
        nodes = _fit_nodes(dim, MAX_POLY_DEGREE) * scale
        vals = np.asarray(func(center + nodes), dtype=float).reshape((len(nodes),) + tuple(shape))
        V = _monomial_values(dim, nodes)
        sol = np.linalg.solve(V, vals.reshape(len(nodes), -1))  # (nm, prod(shape))
        coef = np.moveaxis(sol.reshape((len(nodes),) + tuple(shape)), 0, -1)
        degs = np.array([sum(e) for e in monomials(dim)])
        coef = np.where(degs <= degree, coef, 0.0)
        return cls(dim, coef, center, tuple(shape))

    # evaluation --------------------------------------------------------------------

    @property
    def degree(self) -> int:
        degs = np.array([sum(e) for e in monomials(self.dim)])
        nz = np.abs(self.coef).reshape(-1, len(degs)).max(axis=0) > 0
        return int(degs[nz].max()) if nz.any() else 0

    @property
    def is_scalar(self) -> bool:
        return self.shape == ()

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        V = _monomial_values(self.dim, x - self.center)  # (n, nm)
        return np.einsum("...m,nm->n...", self.coef, V)

    def recenter(self, center) -> "PolyField":
        center = np.asarray(center, dtype=float)
        return PolyField.fit(self, self.dim, self.shape, self.degree, center)

    # algebra -----------------------------------------------------------------------

    def _aligned(self, other: "PolyField") -> "PolyField":
        if other.dim != self.dim:
            raise OperatorError("polynomial fields live in different dimensions")
        if np.array_equal(other.center, self.center):
            return other
        return other.recenter(self.center)

    def __add__(self, other):
        if isinstance(other, PolyField):
            other = self._aligned(other)
            return PolyField(self.dim, self.coef + other.coef, self.center, self.shape)
        return self + PolyField.constant(np.broadcast_to(other, self.shape), self.dim, self.center)

    def __neg__(self):
        return PolyField(self.dim, -self.coef, self.center, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s: float):
        return PolyField(self.dim, float(s) * self.coef, self.center, self.shape)

    __rmul__ = __mul__

    def component(self, i: int) -> "PolyField":
        return PolyField(self.dim, self.coef[i], self.center, ())

    def dot(self, other) -> "PolyField":
        """Pointwise dot product with a constant vector or another vector polynomial."""
        if isinstance(other, PolyField):
            other = self._aligned(other)
            deg = self.degree + other.degree
            if deg > MAX_POLY_DEGREE:
                raise OperatorError(f"product degree {deg} exceeds {MAX_POLY_DEGREE}")
            return PolyField.fit(
                lambda x: (self(x) * other(x)).sum(axis=1), self.dim, (), deg, self.center
            )
        c = np.asarray(other, dtype=float)
        return PolyField(self.dim, np.tensordot(c, self.coef, axes=(0, 0)), self.center, ())

    def cross(self, c) -> "PolyField":
        """Pointwise ``self x c`` with a constant 3-vector ``c``."""
        if self.shape != (3,):
            raise OperatorError("cross product needs a 3D vector field")
        c = np.asarray(c, dtype=float)
        coef = np.cross(self.coef, c, axisa=0, axisb=0, axisc=0)
        return PolyField(self.dim, coef, self.center, (3,))

    def partial(self, j: int) -> "PolyField":
        exps = monomials(self.dim)
        index = {e: i for i, e in enumerate(exps)}
        coef = np.zeros_like(self.coef)
        for i, e in enumerate(exps):
            if e[j] == 0:
                continue
            lower = tuple(e[k] - (k == j) for k in range(self.dim))
            coef[..., index[lower]] += e[j] * self.coef[..., i]
        return PolyField(self.dim, coef, self.center, self.shape)


# ---------------------------------------------------------------------------
# analytic fields


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """A smooth field given by callbacks, used as an interpolation target.

    ``value(x)`` maps points ``(n, dim)`` to ``(n,)`` or ``(n, k)``. The
    optional derivative callbacks are ``div`` (scalar), ``curl`` (3D vector,
    or scalar ``rot`` for 2D vector fields). ``s`` is the Sobolev regularity
    label reported by studies.
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    shape: tuple[int, ...] = ()
    div: Callable | None = None
    curl: Callable | None = None
    rot: Callable | None = None
    s: float = 1.0
    name: str = "field"
    length: float = 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.value(x), dtype=float).reshape((len(x),) + tuple(self.shape))

    def _fd_jacobian(self, x: np.ndarray, step: float) -> np.ndarray:
        """Central-difference Jacobian ``(n, k, dim)``."""
        cols = []
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            cols.append((self(x + e) - self(x - e)) / (2 * step))
        return np.stack(cols, axis=-1)

    def self_test(self, rng: np.random.Generator | None = None, n: int = 16, box=None, tol: float = 1e-6) -> dict:
        """Compare the derivative callbacks with central differences (step 1e-5 * length).

        Returns ``{name: relative error}``; raises ``ValueError`` when one exceeds ``tol``.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        lo, hi = (np.zeros(self.dim), np.ones(self.dim)) if box is None else map(np.asarray, box)
        x = lo + (hi - lo) * rng.random((n, self.dim))
        J = self._fd_jacobian(x, 1e-5 * self.length)
        checks = {}
        if self.div is not None:
            checks["div"] = (np.asarray(self.div(x), float).reshape(n), np.trace(J, axis1=1, axis2=2))
        if self.curl is not None:
            fd = np.stack(
                [J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], axis=1
            )
            checks["curl"] = (np.asarray(self.curl(x), float).reshape(n, 3), fd)
        if self.rot is not None:
            checks["rot"] = (np.asarray(self.rot(x), float).reshape(n), J[:, 1, 0] - J[:, 0, 1])
        errors = {}
        for key, (exact, fd) in checks.items():
            scale = max(np.abs(exact).max(), np.abs(self(x)).max() / self.length, 1e-300)
            errors[key] = float(np.abs(exact - fd).max() / scale)
            if errors[key] > tol:
                raise ValueError(f"{self.name}: analytic {key} disagrees with finite differences ({errors[key]:.2e})")
        return errors

    def derived(self, which: str) -> "AnalyticField":
        """The analytic div/curl/rot as a field of its own."""
        cb = getattr(self, which)
        if cb is None:
            raise OperatorError(f"{self.name} has no analytic {which}")
        shape = (3,) if which == "curl" else ()
        return AnalyticField(self.dim, cb, shape, name=f"{which} {self.name}", s=self.s, length=self.length)


Field = Union[PolyField, AnalyticField]


# ---------------------------------------------------------------------------
# differential operators


def _restrict_to_face(f: PolyField, frame: PolygonGeometry) -> PolyField:
    """Pull a 3D polynomial back to in-plane coordinates; vectors keep their tangential part."""
    if frame is None or frame.axes is None:
        raise OperatorError("face operators on 3D fields need the face frame")
    shape = () if f.is_scalar else (2,)

    def g(s):
        vals = f(frame.to_global(s))
        return vals if f.is_scalar else frame.vectors_to_local(vals)

    return PolyField.fit(g, 2, shape, f.degree, np.zeros(2))


def apply_diff(op: str, f: PolyField, frame: PolygonGeometry | FaceGeometry | None = None) -> PolyField:
    """Exact differentiation of a :class:`PolyField`.

    ``op`` is one of ``grad``, ``div``, ``curl``, ``rot_F``, ``curl_F``,
    ``div_F``. Face operators accept either a 2D field or a 3D field plus the
    face frame; the result is then expressed in the frame coordinates.
    """
    if isinstance(frame, FaceGeometry):
        frame = frame.polygon
    if op in ("rot_F", "curl_F", "div_F") and f.dim == 3:
        f = _restrict_to_face(f, frame)
    d = f.dim
    if op == "grad":
        if not f.is_scalar:
            raise OperatorError("grad needs a scalar field")
        parts = [f.partial(j).coef for j in range(d)]
        return PolyField(d, np.stack(parts), f.center, (d,))
    if op in ("div", "div_F"):
        if f.shape != (d,) or (op == "div_F" and d != 2):
            raise OperatorError(f"{op} needs a {d}-vector field, got shape {f.shape}")
        return PolyField(d, sum(f.partial(j).coef[j] for j in range(d)), f.center, ())
    if op == "curl":
        if d != 3 or f.shape != (3,):
            raise OperatorError("curl needs a 3D vector field")
        p = [f.partial(j).coef for j in range(3)]
        coef = np.stack([p[1][2] - p[2][1], p[2][0] - p[0][2], p[0][1] - p[1][0]])
        return PolyField(3, coef, f.center, (3,))
    if op == "rot_F":
        if d != 2 or f.shape != (2,):
            raise OperatorError("rot_F needs a 2D vector field")
        return PolyField(2, f.partial(0).coef[1] - f.partial(1).coef[0], f.center, ())
    if op == "curl_F":
        if d != 2 or not f.is_scalar:
            raise OperatorError("curl_F needs a 2D scalar field")
        return PolyField(2, np.stack([f.partial(1).coef, -f.partial(0).coef]), f.center, (2,))
    raise OperatorError(f"unknown operator {op!r}")


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class Segment:
    """A straight edge from ``a`` to ``b``."""

    a: np.ndarray
    b: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.asarray(self.b) - np.asarray(self.a)))


Region = Union[PolygonGeometry, PolyhedronGeometry, FaceGeometry, Segment]


def _region_simplices(region, submesh: SimplexSubmesh | None, level: int):
    """Physical simplices (points, simplices) covering the region, and an optional local->global map."""
    if isinstance(region, Segment):
        pts = np.array([region.a, region.b], dtype=float)
        return pts, np.array([[0, 1]]), None
    if isinstance(region, FaceGeometry):
        region = region.polygon
    sub = submesh if submesh is not None else submesh_for(region, level)
    if isinstance(region, PolygonGeometry) and region.axes is not None:
        return sub.points, sub.simplices, region.to_global
    return sub.points, sub.simplices, None


def quadrature_points(
    region, degree: int, submesh: SimplexSubmesh | None = None, level: int = 0, local: bool = False
):
    """Flattened quadrature points and weights for ``region``.

    Points on a face of a polyhedron are global unless ``local`` asks for the
    face frame coordinates.
    """
    pts, simp, to_global = _region_simplices(region, submesh, level)
    x, w = simplex_quadrature(pts, simp, degree)
    x = x.reshape(-1, pts.shape[1])
    if to_global is not None and not local:
        x = to_global(x)
    return x, w.ravel()


def integrate(
    region: Region,
    f: Field | Callable,
    degree: int | None = None,
    submesh: SimplexSubmesh | None = None,
    level: int = 0,
):
    """Integral of ``f`` over an element, a face, a 2D cell or a segment.

    Polynomial fields are integrated exactly on the level-0 fan with a rule of
    their own degree. On a face of a polyhedron, 2D fields are read in the
    face frame and 3D fields (or callables) at global points. Analytic fields (or plain callables) use a Gauss rule of
    ``degree`` on every simplex of ``submesh`` (default: the level-``level``
    sub-tessellation). Vector fields return the vector of component integrals.
    """
    if degree is None:
        if not isinstance(f, PolyField):
            raise QuadratureError("analytic integrands need an explicit rule degree")
        degree = f.degree
    degree = _check_degree(degree)
    if isinstance(f, PolyField) and degree < f.degree:
        raise QuadratureError(f"rule degree {degree} below polynomial degree {f.degree}")
    local = getattr(f, "dim", None) == 2  # in-plane fields on a face use the frame coordinates
    x, w = quadrature_points(region, degree, submesh, level, local=local)
    vals = np.asarray(f(x), dtype=float)
    out = np.tensordot(w, vals.reshape(len(w), -1), axes=(0, 0))
    return float(out[0]) if vals.ndim == 1 else out.reshape(vals.shape[1:])


def edge_average(a, b, f: Field | Callable, degree: int = 10, pieces: int = 1) -> np.ndarray:
    """Average of ``f`` over the segment ``[a, b]`` using ``pieces`` Gauss subintervals."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, w = line_rule(_check_degree(degree))
    ts = ((np.arange(pieces)[:, None] + t[None, :]) / pieces).ravel()
    ws = np.tile(w, pieces) / pieces
    vals = np.asarray(f(a + ts[:, None] * (b - a)), dtype=float)
    return np.tensordot(ws, vals, axes=(0, 0))
