"""Reconstructed virtual functions, L2 distances and Gram matrices."""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..calculus import AnalyticField, PolyField, simplex_quadrature
from ..mesh.geometry import ElementGeometry, PolygonGeometry, with_vertices
from ..mesh.submesh import SimplexSubmesh, submesh_for
from ..vem import DofVector, SpaceTag, n_dofs
from .fem import SimplexComplex, mass_products
from .solvers import ROT, Basis, OracleError, edge3d_basis, face2d_basis, face3d_basis

DISTANCE_DEGREE = 4
CACHE_SIZE = 64


# ---------------------------------------------------------------------------
# per-element workspaces, shared between translated copies of an element


def _relative_vertices(geom: ElementGeometry) -> np.ndarray:
    return np.round(geom.vertices - geom.vertices[0], 12) + 0.0


def geometry_key(geom: ElementGeometry) -> tuple:
    """Translation-invariant description of an element, including DOF orientation data."""
    rel = _relative_vertices(geom)
    if isinstance(geom, PolygonGeometry):
        return ("polygon", rel.tobytes(), tuple(geom.edge_signs.tolist()))
    pos = {int(v): i for i, v in enumerate(geom.vertex_ids)}
    faces = tuple(tuple(pos[int(v)] for v in f.polygon.vertex_ids) for f in geom.faces)
    edges = tuple((pos[int(a)], pos[int(b)]) for a, b in geom.edge_vertices)
    return ("polyhedron", rel.tobytes(), faces, edges)


@dataclass(eq=False)
class Workspace:
    """DOF basis reconstructions of one space on one element shape at one level."""

    space: SpaceTag
    level: int
    origin: np.ndarray  # first vertex of the canonical copy the data was computed on
    basis: Basis
    accuracy: np.ndarray | None  # E with estimate(d)^2 = d^T E d
    gram: np.ndarray
    delta: tuple | None = None  # basis change against the coarser level, (da, dM)
    coarse_gram: np.ndarray | None = None
    deriv_gram: np.ndarray | None = None  # L2 products of div / rot / curl of the basis
    coarse_deriv_gram: np.ndarray | None = None

    def estimate(self, d: np.ndarray) -> float:
        """L2 distance between the level-L and level-(L-1) reconstructions of ``d``."""
        if self.delta is None:
            return float("nan")
        da, dM = self.delta
        a, M = da @ d, dM @ d
        cx = self.basis.complex
        val = mass_products(cx, a[..., None], M[..., None], a[..., None], M[..., None])[0, 0]
        return float(np.sqrt(max(val, 0.0)))

    def translated(self, geom: ElementGeometry) -> SimplexComplex:
        shift = geom.vertices[0] - self.origin
        cx = self.basis.complex
        if not shift.any():
            return cx
        return SimplexComplex(cx.points + shift, cx.simplices)


_cache: "OrderedDict[tuple, Workspace]" = OrderedDict()
_cache_lock = threading.Lock()


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def _submesh(geom: ElementGeometry, level: int) -> SimplexSubmesh:
    return submesh_for(geom, level)


def _build_basis(space: SpaceTag, geom: ElementGeometry, level: int) -> Basis:
    sub = _submesh(geom, level)
    if space in (SpaceTag.FACE2D, SpaceTag.EDGE2D):
        b = face2d_basis(sub.points, sub.simplices, sub.facets, sub.facet_parent, geom.n_edges, geom.barycenter, geom.element)
        if space == SpaceTag.EDGE2D:
            b = Basis(
                b.complex,
                np.einsum("pq,mqk->mpk", ROT, b.a),
                np.einsum("pq,mqrk->mprk", ROT, b.M),
                b.deriv,  # rot of the turned field is the divergence of the original
                b.condition,
            )
        return b
    if space == SpaceTag.FACE3D:
        return face3d_basis(sub, geom)
    return edge3d_basis(sub, geom)


def _prolong(fine: SimplexSubmesh, fine_cx: SimplexComplex, coarse_cx: SimplexComplex, a, M, level: int):
    """Affine data of a coarse-level field on the simplices of a finer submesh."""
    parent = fine.ancestor(level)
    off = fine_cx.centroids - coarse_cx.centroids[parent]
    a_f = a[parent] + np.einsum("mpq...,mq->mp...", M[parent], off)
    return a_f, M[parent]


def _deriv_gram(basis: Basis) -> np.ndarray:
    vol = basis.complex.volumes
    D = basis.deriv if basis.deriv.ndim == 3 else basis.deriv[:, None, :]
    G = np.einsum("m,mpi,mpj->ij", vol, D, D)
    return 0.5 * (G + G.T)


def _gram(basis: Basis) -> np.ndarray:
    G = mass_products(basis.complex, basis.a, basis.M, basis.a, basis.M)
    return 0.5 * (G + G.T)


def workspace(space, geom: ElementGeometry, level: int) -> Workspace:
    space = SpaceTag.parse(space)
    n_dofs(space, geom)  # validates the binding
    if level < 0:
        raise ValueError("oracle level must be non-negative")
    key = (space, level, geometry_key(geom))
    with _cache_lock:
        ws = _cache.get(key)
        if ws is not None:
            _cache.move_to_end(key)
            return ws
    # computed on a copy rebuilt from the key data, so every translated copy
    # gets bit-identical results whichever element fills the cache first
    canon = with_vertices(geom, _relative_vertices(geom))
    basis = _build_basis(space, canon, level)
    cx = basis.complex
    acc = delta = coarse_gram = coarse_dgram = None
    if level >= 1:
        coarse = _build_basis(space, canon, level - 1)
        a_c, M_c = _prolong(_submesh(canon, level), cx, coarse.complex, coarse.a, coarse.M, level - 1)
        da, dM = basis.a - a_c, basis.M - M_c
        acc = mass_products(cx, da, dM, da, dM)
        acc = 0.5 * (acc + acc.T)
        delta = (da, dM)
        coarse_gram, coarse_dgram = _gram(coarse), _deriv_gram(coarse)
    ws = Workspace(
        space, level, canon.vertices[0].copy(), basis, acc, _gram(basis), delta, coarse_gram, _deriv_gram(basis), coarse_dgram
    )
    with _cache_lock:
        _cache[key] = ws
        while len(_cache) > CACHE_SIZE:
            _cache.popitem(last=False)
    return ws


# ---------------------------------------------------------------------------
# reconstructed fields


@dataclass(frozen=True, eq=False)
class SubmeshField:
    """A virtual function materialized as a piecewise-affine field on a simplex submesh.

    ``a[k] + M[k] (x - c_k)`` on simplex ``k``. ``deriv`` holds the
    piecewise-constant divergence (face spaces), rot (Edge2D) or curl
    (Edge3D). ``accuracy_estimate`` is the L2 distance to the reconstruction
    one level coarser (NaN at level 0).
    """

    space: SpaceTag
    geometry: ElementGeometry
    level: int
    complex: SimplexComplex
    submesh: SimplexSubmesh
    a: np.ndarray
    M: np.ndarray
    deriv: np.ndarray
    accuracy_estimate: float
    dofs: DofVector | None = field(default=None, repr=False)

    @property
    def element(self) -> int:
        return self.geometry.element

    @property
    def dim(self) -> int:
        return self.complex.dim

    def values(self, simplex: np.ndarray, x: np.ndarray) -> np.ndarray:
        simplex = np.asarray(simplex)
        y = x - self.complex.centroids[simplex]
        return self.a[simplex] + np.einsum("...pq,...q->...p", self.M[simplex], y)

    def locate(self, x: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Index of a simplex containing each point (``-1`` outside)."""
        cx = self.complex
        x = np.atleast_2d(x)
        p0 = cx.points[cx.simplices[:, 0]]
        lam = np.einsum("mip,nmp->nmi", cx.grads[:, 1:], x[:, None, :] - p0[None])
        lam = np.concatenate([1 - lam.sum(axis=2, keepdims=True), lam], axis=2)
        inside = lam.min(axis=2) >= -tol
        idx = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
        return idx

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.locate(x)
        if (idx < 0).any():
            raise ValueError("evaluation point outside the element")
        return self.values(idx, x)

    def integral(self) -> np.ndarray:
        return self.complex.volumes @ self.a

    def mean(self) -> np.ndarray:
        """Oracle L2 projection onto constants."""
        return self.integral() / self.complex.volumes.sum()

    def norm(self) -> float:
        cx = self.complex
        return float(np.sqrt(mass_products(cx, self.a[..., None], self.M[..., None], self.a[..., None], self.M[..., None])[0, 0]))

    def inner(self, other: "SubmeshField") -> float:
        f, g = _align(self, other)
        cx = f.complex
        return float(mass_products(cx, f.a[..., None], f.M[..., None], g[0][..., None], g[1][..., None])[0, 0])

    # checks ----------------------------------------------------------------------

    def _owner(self) -> np.ndarray:
        cx = self.complex
        owner = np.empty(len(cx.facets), dtype=np.int64)
        owner[cx.simplex_facets.ravel()] = np.repeat(np.arange(cx.n_simplices), cx.dim + 1)
        return owner[cx.facet_index(self.submesh.facets)]

    def reextract(self) -> DofVector:
        """DOFs of the reconstruction, read from its boundary values."""
        g = self.geometry
        cx = self.complex
        pts = cx.points[self.submesh.facets]
        owner = self._owner()
        parent = self.submesh.facet_parent
        if self.space in (SpaceTag.FACE2D, SpaceTag.EDGE2D):
            mids = pts.mean(axis=1)
            lens = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
            dirs = g.edge_normals if self.space == SpaceTag.FACE2D else g.edge_tangents
            comp = np.einsum("bp,bp->b", self.values(owner, mids), dirs[parent]) * lens
            vals = np.bincount(parent, comp, minlength=g.n_edges) / g.edge_lengths
            return DofVector(self.space, vals, g)
        if self.space == SpaceTag.FACE3D:
            cen = pts.mean(axis=1)
            area = 0.5 * np.linalg.norm(np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]), axis=1)
            normals = np.array([f.normal for f in g.faces])
            comp = np.einsum("bp,bp->b", self.values(owner, cen), normals[parent]) * area
            vals = np.bincount(parent, comp, minlength=g.n_faces) / np.array([f.area for f in g.faces])
            return DofVector(self.space, vals, g)
        # Edge3D: sub-edges of boundary facets lying on an element edge
        pos = {int(v): j for j, v in enumerate(g.vertex_ids)}
        P = np.array([g.vertices[pos[int(a)]] for a, _ in g.edge_vertices])
        Q = np.array([g.vertices[pos[int(b)]] for _, b in g.edge_vertices])
        seen = set()
        vals = np.zeros(g.n_edges)
        facets = self.submesh.facets
        for i, j in ((0, 1), (1, 2), (2, 0)):
            u, w = facets[:, i], facets[:, j]
            pu, pw = cx.points[u], cx.points[w]
            for e in range(g.n_edges):
                t = g.edge_tangents[e]
                L = g.edge_lengths[e]
                su = (pu - P[e]) @ t
                sw = (pw - P[e]) @ t
                du = np.linalg.norm(pu - P[e] - su[:, None] * t, axis=1)
                dw = np.linalg.norm(pw - P[e] - sw[:, None] * t, axis=1)
                tol = 1e-9 * L
                on = (du < tol) & (dw < tol) & (su > -tol) & (sw > -tol) & (su < L + tol) & (sw < L + tol)
                for b in np.nonzero(on)[0]:
                    key = (min(u[b], w[b]), max(u[b], w[b]))
                    if key in seen:
                        continue
                    seen.add(key)
                    mid = 0.5 * (pu[b] + pw[b])
                    val = self.values(owner[b], mid[None])[0]
                    vals[e] += (val @ t) * abs(sw[b] - su[b])
        return DofVector(self.space, vals / g.edge_lengths, g)

    def constraint_residual(self) -> np.ndarray:
        """The enhancing-constraint integrals of the reconstruction (zero for members of the space)."""
        g = self.geometry
        cx = self.complex
        if self.space in (SpaceTag.FACE2D, SpaceTag.EDGE2D):
            y = cx.centroids - g.barycenter
            if self.space == SpaceTag.FACE2D:
                A = ROT  # psi . x_F^perp
            else:
                A = np.eye(2)  # v . x_F
            xa = y @ A.T
            val = np.einsum("m,mp,mp->", cx.volumes, self.a, xa)
            val += np.einsum("mpq,pr,mqr->", self.M, A, cx.second_moments)
            return np.array([val])
        y = cx.centroids - g.barycenter
        out = np.empty(3)
        for j in range(3):
            E = np.cross(np.eye(3), np.eye(3)[j]).T  # (x x e_j) = E x
            if self.space == SpaceTag.FACE3D:
                out[j] = np.einsum("m,mp,mp->", cx.volumes, self.a, y @ E.T) + np.einsum(
                    "mpq,pr,mqr->", self.M, E, cx.second_moments
                )
            else:
                out[j] = np.einsum("m,mp,mp->", cx.volumes, self.deriv, y @ E.T)
        return out


def _align(f: SubmeshField, g: SubmeshField):
    """Bring two reconstructions of one element onto the finer submesh."""
    if f.geometry is not g.geometry and geometry_key(f.geometry) != geometry_key(g.geometry):
        raise ValueError(f"fields live on different elements ({f.element} and {g.element})")
    if f.complex.dim != g.complex.dim:
        raise ValueError("fields of different dimensions")
    if f.level < g.level:
        f, g = g, f
    if g.level == f.level:
        return f, (g.a, g.M)
    a, M = _prolong(f.submesh, f.complex, g.complex, g.a, g.M, g.level)
    return f, (a, M)


def reconstruct(d: DofVector, level: int = 2) -> SubmeshField:
    """Materialize the virtual function with DOFs ``d`` on the level-``level`` submesh."""
    geom = d.geometry
    ws = workspace(d.space, geom, level)
    cx = ws.translated(geom)
    vals = d.values
    a = ws.basis.a @ vals
    M = ws.basis.M @ vals
    deriv = ws.basis.deriv @ vals
    acc = ws.estimate(vals)
    return SubmeshField(d.space, geom, level, cx, _submesh(geom, level), a, M, deriv, acc, d)


def l2_distance(f: SubmeshField, g, degree: int = DISTANCE_DEGREE) -> float:
    """L2 distance on the element between a reconstruction and another field.

    ``g`` may be a reconstruction of the same element (exact product on the
    finer submesh), a polynomial or an analytic field (Gauss rule of
    ``degree`` on every simplex of ``f``'s submesh).
    """
    if isinstance(g, SubmeshField):
        f2, (a, M) = _align(f, g)
        da, dM = f2.a - a, f2.M - M
        cx = f2.complex
        val = mass_products(cx, da[..., None], dM[..., None], da[..., None], dM[..., None])[0, 0]
        return float(np.sqrt(max(val, 0.0)))
    cx = f.complex
    if isinstance(g, PolyField):
        degree = max(degree, 2 * max(g.degree, 1))
    if getattr(g, "dim", cx.dim) != cx.dim:
        raise ValueError(f"field dimension {g.dim} does not match the {cx.dim}D element")
    x, w = simplex_quadrature(cx.points, cx.simplices, degree)
    m, q, d = x.shape
    fv = f.a[:, None, :] + np.einsum("mpq,mkq->mkp", f.M, x - cx.centroids[:, None, :])
    gv = np.asarray(g(x.reshape(-1, d)), dtype=float).reshape(m, q, -1)
    return float(np.sqrt((w * ((fv - gv) ** 2).sum(axis=2)).sum()))


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Oracle L2 Gram matrix of the DOF basis of one space on one element."""

    space: SpaceTag
    element: int
    level: int
    matrix: np.ndarray
    accuracy_estimate: float  # L2 change of the worst basis function between levels

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def gram_matrix(space, geom: ElementGeometry, level: int = 2) -> GramMatrix:
    ws = workspace(space, geom, level)
    acc = float(np.sqrt(np.linalg.eigvalsh(ws.accuracy).max())) if ws.accuracy is not None else float("nan")
    return GramMatrix(SpaceTag.parse(space), geom.element, level, ws.gram.copy(), acc)


def accuracy_matrix(space, geom: ElementGeometry, level: int) -> np.ndarray | None:
    return workspace(space, geom, level).accuracy
