"""Simplex sub-tessellation of polygons and polyhedra, with red refinement."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .core import MeshError, PolytopalMesh
from .geometry import ElementGeometry, PolygonGeometry, PolyhedronGeometry, geometry


class StarShapeError(MeshError):
    """The barycenter does not see a face (or polygon edge) of the element."""

    def __init__(self, element: int, face: int, reason: str = "not visible from the barycenter"):
        self.element = element
        self.face = face
        super().__init__(f"element {element}, face {face}: {reason}")


@dataclass(frozen=True, eq=False)
class SimplexSubmesh:
    """Conforming triangulation (2D) or tetrahedralization (3D) of one element.

    ``facets`` are the boundary facets (edges in 2D, triangles in 3D) with
    outward orientation, and ``facet_parent[k]`` is the local index of the
    element face (polygon edge in 2D) containing facet ``k``. ``parent[i]``
    gives the simplex of ``coarser`` that contains simplex ``i``.
    """

    element: int
    points: np.ndarray
    simplices: np.ndarray
    facets: np.ndarray
    facet_parent: np.ndarray
    level: int
    parent: np.ndarray | None = None
    coarser: "SimplexSubmesh | None" = None

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    def volumes(self) -> np.ndarray:
        return simplex_volumes(self.points, self.simplices)

    def centroids(self) -> np.ndarray:
        return self.points[self.simplices].mean(axis=1)

    def ancestor(self, level: int) -> np.ndarray:
        """Index of the level-``level`` simplex containing each simplex."""
        idx = np.arange(self.n_simplices)
        sub = self
        while sub.level > level:
            idx = sub.parent[idx]
            sub = sub.coarser
        if sub.level != level:
            raise ValueError(f"no level-{level} ancestor available")
        return idx

    def at_level(self, level: int) -> "SimplexSubmesh":
        sub = self
        while sub.level > level:
            sub = sub.coarser
        if sub.level != level:
            raise ValueError(f"no level-{level} submesh available")
        return sub

    def quality(self) -> float:
        """Minimum interior angle (2D) or minimum dihedral angle (3D), radians."""
        return float(min_angles(self.points, self.simplices).min())


def simplex_volumes(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    p = points[simplices]
    d = points.shape[1]
    mats = p[:, 1:, :] - p[:, :1, :]
    return np.linalg.det(mats) / factorial(d)


def min_angles(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    p = points[simplices]
    if points.shape[1] == 2:
        out = np.full(len(p), np.pi)
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = (a * b).sum(1) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
            out = np.minimum(out, np.arccos(np.clip(cosang, -1, 1)))
        return out
    # dihedral angle along edge (i, j) between faces (i, j, k) and (i, j, l)
    out = np.full(len(p), np.pi)
    for i, j, k, l in [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2), (1, 2, 0, 3), (1, 3, 0, 2), (2, 3, 0, 1)]:
        e = p[:, j] - p[:, i]
        e /= np.linalg.norm(e, axis=1)[:, None]
        u = p[:, k] - p[:, i]
        w = p[:, l] - p[:, i]
        u -= (u * e).sum(1)[:, None] * e
        w -= (w * e).sum(1)[:, None] * e
        cosang = (u * w).sum(1) / np.linalg.norm(u, axis=1) / np.linalg.norm(w, axis=1)
        out = np.minimum(out, np.arccos(np.clip(cosang, -1, 1)))
    return out


# ---------------------------------------------------------------------------
# level 0: fans from the barycenters


def _fan_polygon(poly: PolygonGeometry) -> SimplexSubmesh:
    n = len(poly.vertices)
    pts = np.vstack([poly.vertices, poly.barycenter[None, :]])
    tris = np.array([[n, i, (i + 1) % n] for i in range(n)], dtype=np.int64)
    vols = simplex_volumes(pts, tris)
    tol = 1e-12 * poly.diameter**2
    for i in np.nonzero(vols <= tol)[0]:
        raise StarShapeError(poly.element, int(i))
    facets = np.array([[i, (i + 1) % n] for i in range(n)], dtype=np.int64)
    return SimplexSubmesh(poly.element, pts, tris, facets, np.arange(n), 0)


def _fan_polyhedron(geom: PolyhedronGeometry) -> SimplexSubmesh:
    nv = len(geom.vertex_ids)
    local = {int(v): i for i, v in enumerate(geom.vertex_ids)}
    pts = [geom.vertices]
    face_nodes = []
    for k, face in enumerate(geom.faces):
        face_nodes.append(nv + k)
        pts.append(face.centroid[None, :])
    center = nv + len(geom.faces)
    pts.append(geom.barycenter[None, :])
    pts = np.vstack(pts)
    tets, facets, parent = [], [], []
    for k, face in enumerate(geom.faces):
        loop = [local[int(v)] for v in face.polygon.vertex_ids]
        m = len(loop)
        for i in range(m):
            tri = [face_nodes[k], loop[i], loop[(i + 1) % m]]
            facets.append(tri)
            parent.append(k)
            tets.append([center] + tri)
    tets = np.array(tets, dtype=np.int64)
    vols = simplex_volumes(pts, tets)
    tol = 1e-12 * geom.diameter**3
    bad = np.nonzero(vols <= tol)[0]
    if len(bad):
        raise StarShapeError(geom.element, int(geom.faces[parent[bad[0]]].face_id))
    return SimplexSubmesh(
        geom.element, pts, tets, np.array(facets, dtype=np.int64), np.array(parent, dtype=np.int64), 0
    )


# ---------------------------------------------------------------------------
# red refinement


class _Midpoints:
    def __init__(self, points: np.ndarray, pairs: np.ndarray):
        n = len(points)
        lo, hi = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
        keys = lo * n + hi
        self.keys, first = np.unique(keys, return_index=True)
        self.n = n
        mids = 0.5 * (points[lo[first]] + points[hi[first]])
        self.points = np.vstack([points, mids])

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        keys = np.minimum(a, b) * self.n + np.maximum(a, b)
        return self.n + np.searchsorted(self.keys, keys)


def _refine_2d(sub: SimplexSubmesh) -> SimplexSubmesh:
    t = sub.simplices
    pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    mid = _Midpoints(sub.points, pairs)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    kids = np.stack(
        [
            np.stack([a, ab, ca], 1),
            np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1),
            np.stack([ab, bc, ca], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    f = sub.facets
    fm = mid(f[:, 0], f[:, 1])
    facets = np.stack([np.stack([f[:, 0], fm], 1), np.stack([fm, f[:, 1]], 1)], axis=1).reshape(-1, 2)
    return SimplexSubmesh(
        sub.element,
        mid.points,
        kids,
        facets,
        np.repeat(sub.facet_parent, 2),
        sub.level + 1,
        parent=np.repeat(np.arange(len(t)), 4),
        coarser=sub,
    )


def _refine_3d(sub: SimplexSubmesh) -> SimplexSubmesh:
    t = sub.simplices
    pairs = np.concatenate([t[:, [i, j]] for i, j in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]])
    mid = _Midpoints(sub.points, pairs)
    P = mid.points
    x0, x1, x2, x3 = t.T
    m01, m02, m03 = mid(x0, x1), mid(x0, x2), mid(x0, x3)
    m12, m13, m23 = mid(x1, x2), mid(x1, x3), mid(x2, x3)
    corners = [
        np.stack([x0, m01, m02, m03], 1),
        np.stack([m01, x1, m12, m13], 1),
        np.stack([m02, m12, x2, m23], 1),
        np.stack([m03, m13, m23, x3], 1),
    ]
    # inner octahedron, split along its shortest diagonal
    diags = [
        (m01, m23, [m02, m12, m13, m03]),
        (m02, m13, [m01, m12, m23, m03]),
        (m03, m12, [m01, m13, m23, m02]),
    ]
    lens = np.stack([np.linalg.norm(P[p] - P[q], axis=1) for p, q, _ in diags], axis=1)
    choice = np.argmin(lens, axis=1)
    inner = []
    for r in range(4):
        opts = []
        for p, q, ring in diags:
            opts.append(np.stack([p, q, ring[r], ring[(r + 1) % 4]], 1))
        inner.append(np.choose(choice[:, None], opts))
    kids = np.stack(corners + inner, axis=1).reshape(-1, 4)
    vols = simplex_volumes(P, kids)
    neg = vols < 0
    kids[neg] = kids[neg][:, [1, 0, 2, 3]]

    f = sub.facets
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    facets = np.stack(
        [
            np.stack([a, ab, ca], 1),
            np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1),
            np.stack([ab, bc, ca], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return SimplexSubmesh(
        sub.element,
        P,
        kids,
        facets,
        np.repeat(sub.facet_parent, 4),
        sub.level + 1,
        parent=np.repeat(np.arange(len(t)), 8),
        coarser=sub,
    )


def refine(sub: SimplexSubmesh) -> SimplexSubmesh:
    """One uniform red refinement (4 children per triangle, 8 per tetrahedron)."""
    return _refine_2d(sub) if sub.dimension == 2 else _refine_3d(sub)


def subtessellate_geometry(geom: ElementGeometry, level: int = 0) -> SimplexSubmesh:
    if level < 0:
        raise ValueError("refinement level must be non-negative")
    sub = _fan_polygon(geom) if isinstance(geom, PolygonGeometry) else _fan_polyhedron(geom)
    for _ in range(level):
        sub = refine(sub)
    return sub


@lru_cache(maxsize=256)
def _cached_submesh(geom: ElementGeometry, level: int) -> SimplexSubmesh:
    if level == 0:
        return subtessellate_geometry(geom, 0)
    return refine(_cached_submesh(geom, level - 1))


def submesh_for(geom: ElementGeometry, level: int) -> SimplexSubmesh:
    """Level-``level`` submesh of an element geometry (memoized per geometry object)."""
    if level < 0:
        raise ValueError("refinement level must be non-negative")
    return _cached_submesh(geom, level)


def subtessellate(mesh: PolytopalMesh, cell: int, level: int = 0) -> SimplexSubmesh:
    """Fan the cell from its barycenter (through face barycenters in 3D), then refine ``level`` times."""
    return submesh_for(geometry(mesh, cell), level)
