"""Element geometry: measures, barycenters, normals, tangents and face frames."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .core import PolytopalMesh


@dataclass(frozen=True, eq=False)
class PolygonGeometry:
    """A polygon in its own 2D coordinates, vertices counterclockwise.

    For cells of a 2D mesh the local coordinates are the mesh coordinates.
    For faces of a 3D cell they are in-plane coordinates ``(s, t)`` with
    ``x = origin + s * axes[0] + t * axes[1]``; the frame is right-handed
    with respect to the outward normal of the owning cell, so counterclockwise
    in the frame means counterclockwise about ``n_F``.

    Edge ``i`` runs from vertex ``i`` to vertex ``i + 1``. ``edge_signs[i]`` is
    ``t_e . t~_e`` (the local counterclockwise tangent against the global one).
    """

    element: int
    vertex_ids: np.ndarray
    vertices: np.ndarray
    measure: float
    barycenter: np.ndarray
    diameter: float
    edge_ids: np.ndarray
    edge_lengths: np.ndarray
    edge_tangents: np.ndarray
    edge_normals: np.ndarray
    edge_midpoints: np.ndarray
    edge_signs: np.ndarray
    origin: np.ndarray | None = None
    axes: np.ndarray | None = None

    dimension = 2

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def to_global(self, pts: np.ndarray) -> np.ndarray:
        if self.axes is None:
            return np.asarray(pts, dtype=float)
        return self.origin + np.asarray(pts) @ self.axes

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        if self.axes is None:
            return np.asarray(pts, dtype=float)
        return (np.asarray(pts) - self.origin) @ self.axes.T

    def vectors_to_local(self, vecs: np.ndarray) -> np.ndarray:
        """Tangential components of 3D vectors in the face frame."""
        if self.axes is None:
            return np.asarray(vecs, dtype=float)
        return np.asarray(vecs) @ self.axes.T

    def vectors_to_global(self, vecs: np.ndarray) -> np.ndarray:
        if self.axes is None:
            return np.asarray(vecs, dtype=float)
        return np.asarray(vecs) @ self.axes


@dataclass(frozen=True, eq=False)
class FaceGeometry:
    face_id: int
    orientation: int  # sign of the stored face normal against n_E
    normal: np.ndarray
    area: float
    diameter: float
    centroid: np.ndarray
    polygon: PolygonGeometry
    cell_edge_index: np.ndarray  # polygon edge i -> position in the cell edge list


@dataclass(frozen=True, eq=False)
class PolyhedronGeometry:
    element: int
    vertex_ids: np.ndarray
    vertices: np.ndarray
    measure: float
    barycenter: np.ndarray
    diameter: float
    faces: tuple[FaceGeometry, ...]
    edge_ids: np.ndarray
    edge_vertices: np.ndarray  # (m, 2) global vertex ids, low -> high
    edge_tangents: np.ndarray  # t~_e
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray

    dimension = 3

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)


ElementGeometry = Union[PolygonGeometry, PolyhedronGeometry]


def _diameter(pts: np.ndarray) -> float:
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1)).max())


def polygon_area_centroid(pts: np.ndarray) -> tuple[float, np.ndarray]:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


def make_polygon(
    element: int,
    vertex_ids,
    pts2: np.ndarray,
    edge_ids,
    origin: np.ndarray | None = None,
    axes: np.ndarray | None = None,
) -> PolygonGeometry:
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    pts2 = np.asarray(pts2, dtype=float)
    area, centroid = polygon_area_centroid(pts2)
    nxt = np.roll(pts2, -1, axis=0)
    vec = nxt - pts2
    lengths = np.linalg.norm(vec, axis=1)
    tangents = vec / lengths[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    signs = np.where(vertex_ids < np.roll(vertex_ids, -1), 1, -1)
    return PolygonGeometry(
        element=element,
        vertex_ids=vertex_ids,
        vertices=pts2,
        measure=area,
        barycenter=centroid,
        diameter=_diameter(pts2),
        edge_ids=np.asarray(edge_ids, dtype=np.int64),
        edge_lengths=lengths,
        edge_tangents=tangents,
        edge_normals=normals,
        edge_midpoints=0.5 * (pts2 + nxt),
        edge_signs=signs,
        origin=origin,
        axes=axes,
    )


def polygon_from_points(pts2, element: int = 0) -> PolygonGeometry:
    """Standalone polygon (vertex ids 0..n-1) from counterclockwise 2D points."""
    pts2 = np.asarray(pts2, dtype=float)
    n = len(pts2)
    return make_polygon(element, np.arange(n), pts2, np.arange(n))


def _loop_edge_ids(mesh: PolytopalMesh, loop) -> list[int]:
    return [mesh.edge_id(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))]


def _face_frame(pts3: np.ndarray):
    nxt = np.roll(pts3, -1, axis=0)
    nrm = 0.5 * np.cross(pts3, nxt).sum(axis=0)
    n = nrm / np.linalg.norm(nrm)
    u1 = pts3[1] - pts3[0]
    u1 = u1 - n * (u1 @ n)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(n, u1)
    return n, np.stack([u1, u2])


def _cell_geometry_2d(mesh: PolytopalMesh, cell: int) -> PolygonGeometry:
    loop = mesh.cells[cell]
    return make_polygon(cell, loop, mesh.vertices[list(loop)], _loop_edge_ids(mesh, loop))


def _cell_geometry_3d(mesh: PolytopalMesh, cell: int) -> PolyhedronGeometry:
    edge_ids = mesh.cell_edge_ids(cell)
    faces = [
        (f, s, loop, _loop_edge_ids(mesh, loop))
        for k, (f, s) in enumerate(mesh.cells[cell])
        for loop in (mesh.oriented_face_loop(cell, k),)
    ]
    vids = mesh.cell_vertex_ids(cell)
    return _polyhedron(cell, vids, mesh.vertices[vids], edge_ids, mesh.edges[edge_ids], faces)


def _polyhedron(cell: int, vids, coords: np.ndarray, edge_ids, ev, faces) -> PolyhedronGeometry:
    """Polyhedron geometry from its vertex coordinates (rows matching ``vids``) and oriented face loops."""
    pos = {int(v): i for i, v in enumerate(vids)}
    V = lambda ids: coords[[pos[int(i)] for i in ids]]  # noqa: E731
    edge_pos = {int(e): i for i, e in enumerate(edge_ids)}
    evec = V(ev[:, 1]) - V(ev[:, 0])
    elen = np.linalg.norm(evec, axis=1)

    ref = coords.mean(axis=0)
    vol = 0.0
    moment = np.zeros(3)
    geoms = []
    for f, s, loop, loop_edges in faces:
        pts3 = V(loop)
        n, axes = _face_frame(pts3)
        p2 = (pts3 - pts3[0]) @ axes.T
        area, c2 = polygon_area_centroid(p2)
        centroid = pts3[0] + c2 @ axes
        poly = make_polygon(f, loop, p2 - c2, loop_edges, origin=centroid, axes=axes)
        geoms.append(
            FaceGeometry(
                face_id=f,
                orientation=s,
                normal=n,
                area=area,
                diameter=poly.diameter,
                centroid=centroid,
                polygon=poly,
                cell_edge_index=np.array([edge_pos[int(e)] for e in poly.edge_ids], dtype=np.int64),
            )
        )
        # pyramid fan over the face triangles (face centroid, v_i, v_i+1)
        a = centroid - ref
        for i in range(len(loop)):
            b = pts3[i] - ref
            c = pts3[(i + 1) % len(loop)] - ref
            v6 = float(np.dot(a, np.cross(b, c)))
            vol += v6 / 6.0
            moment += v6 / 6.0 * (a + b + c) / 4.0
    bary = ref + moment / vol
    return PolyhedronGeometry(
        element=cell,
        vertex_ids=np.asarray(vids),
        vertices=coords,
        measure=vol,
        barycenter=bary,
        diameter=_diameter(coords),
        faces=tuple(geoms),
        edge_ids=np.asarray(edge_ids),
        edge_vertices=np.asarray(ev),
        edge_tangents=evec / elen[:, None],
        edge_lengths=elen,
        edge_midpoints=0.5 * (V(ev[:, 0]) + V(ev[:, 1])),
    )


def with_vertices(geom: ElementGeometry, coords: np.ndarray) -> ElementGeometry:
    """The same element (ids, orientations, face loops) rebuilt on new vertex coordinates."""
    coords = np.asarray(coords, dtype=float)
    if isinstance(geom, PolygonGeometry):
        if geom.axes is not None:
            raise ValueError("face polygons are rebuilt through their polyhedron")
        return make_polygon(geom.element, geom.vertex_ids, coords, geom.edge_ids)
    faces = [(f.face_id, f.orientation, f.polygon.vertex_ids, f.polygon.edge_ids) for f in geom.faces]
    return _polyhedron(geom.element, geom.vertex_ids, coords, geom.edge_ids, geom.edge_vertices, faces)


@lru_cache(maxsize=16384)
def geometry(mesh: PolytopalMesh, cell: int) -> ElementGeometry:
    """Geometry of one cell: a PolygonGeometry in 2D, a PolyhedronGeometry in 3D."""
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell id {cell} out of range (mesh has {mesh.n_cells} cells)")
    if mesh.dimension == 2:
        return _cell_geometry_2d(mesh, cell)
    return _cell_geometry_3d(mesh, cell)
