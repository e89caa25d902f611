"""Polytopal mesh container and its validation rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_PLANAR = 1e-9


class MeshError(ValueError):
    """Base class for mesh problems."""


class MeshParseError(MeshError):
    """Malformed mesh file."""


class MeshValidationError(MeshError):
    """A mesh violates one of the structural invariants.

    ``entity`` is one of ``"vertex"``, ``"edge"``, ``"face"``, ``"cell"`` and
    ``index`` the offending id, so callers can report it without parsing text.
    """

    def __init__(self, entity: str, index: int, reason: str):
        self.entity = entity
        self.index = int(index)
        self.reason = reason
        super().__init__(f"{entity} {index}: {reason}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PolytopalMesh:
    """Vertices, edges, faces and cells of a 2D or 3D polytopal mesh.

    In 2D, ``cells`` are counterclockwise vertex loops and ``faces`` is empty
    (the faces of a polygon are its edges). In 3D, ``faces`` are vertex loops
    whose right-hand normal is the stored face normal, and each cell is a tuple
    of ``(face_id, sign)`` pairs with ``sign = +1`` when the stored normal
    points out of the cell.

    Edges are stored as sorted vertex pairs; the global tangent of an edge
    always runs from the lower to the higher vertex id.
    """

    dimension: int
    vertices: np.ndarray
    edges: np.ndarray
    faces: tuple[tuple[int, ...], ...]
    cells: tuple[tuple, ...]
    _edge_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        edges = np.sort(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2), axis=1)
        object.__setattr__(self, "vertices", _frozen(verts))
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "faces", tuple(tuple(int(v) for v in f) for f in self.faces))
        if self.dimension == 2:
            cells = tuple(tuple(int(v) for v in c) for c in self.cells)
        else:
            cells = tuple(tuple((int(f), int(s)) for f, s in c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(
            self, "_edge_index", {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces) if self.dimension == 3 else len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def edge_id(self, a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        try:
            return self._edge_index[key]
        except KeyError:
            raise KeyError(f"no edge between vertices {a} and {b}") from None

    def cell_vertex_ids(self, cell: int) -> np.ndarray:
        if self.dimension == 2:
            return np.array(self.cells[cell], dtype=np.int64)
        ids = sorted({v for f, _ in self.cells[cell] for v in self.faces[f]})
        return np.array(ids, dtype=np.int64)

    def cell_edge_ids(self, cell: int) -> np.ndarray:
        """Sorted global ids of the edges of ``cell``."""
        if self.dimension == 2:
            loop = self.cells[cell]
            ids = {self.edge_id(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))}
        else:
            ids = set()
            for f, _ in self.cells[cell]:
                loop = self.faces[f]
                ids.update(
                    self.edge_id(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))
                )
        return np.array(sorted(ids), dtype=np.int64)

    def oriented_face_loop(self, cell: int, k: int) -> tuple[int, ...]:
        """Vertex loop of the k-th face of a 3D cell, counterclockwise about n_E."""
        f, s = self.cells[cell][k]
        loop = self.faces[f]
        return loop if s > 0 else (loop[0],) + tuple(reversed(loop[1:]))

    def validate(self, tol_planar: float = TOL_PLANAR) -> "PolytopalMesh":
        validate_mesh(self, tol_planar)
        return self


# ---------------------------------------------------------------------------
# validation


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    return 0.5 * np.cross(pts, nxt).sum(axis=0)


def _segments_intersect(p1, p2, q1, q2, eps) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    return False


def _is_simple_loop(pts2: np.ndarray, scale: float) -> bool:
    n = len(pts2)
    eps = 1e-12 * scale * scale
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(pts2[i], pts2[(i + 1) % n], pts2[j], pts2[(j + 1) % n], eps):
                return False
    return True


def _signed_area_2d(pts2: np.ndarray) -> float:
    x, y = pts2[:, 0], pts2[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _check_loop_edges(mesh: PolytopalMesh, loop: Sequence[int], entity: str, idx: int, used):
    if len(loop) < 3:
        raise MeshValidationError(entity, idx, "loop has fewer than 3 vertices")
    if len(set(loop)) != len(loop):
        raise MeshValidationError(entity, idx, "repeated vertex in loop")
    for v in loop:
        if not 0 <= v < mesh.n_vertices:
            raise MeshValidationError(entity, idx, f"vertex id {v} out of range")
    for i in range(len(loop)):
        a, b = loop[i], loop[(i + 1) % len(loop)]
        try:
            used.add(mesh.edge_id(a, b))
        except KeyError:
            raise MeshValidationError(entity, idx, f"loop uses missing edge ({a}, {b})") from None


def validate_mesh(mesh: PolytopalMesh, tol_planar: float = TOL_PLANAR) -> None:
    """Check every structural invariant; raise MeshValidationError on the first failure."""
    d = mesh.dimension
    if d not in (2, 3):
        raise MeshValidationError("cell", 0, f"unsupported dimension {d}")
    V = mesh.vertices
    if V.ndim != 2 or V.shape[1] != d:
        raise MeshValidationError("vertex", 0, f"coordinates must have {d} components")
    if not np.all(np.isfinite(V)):
        bad = int(np.nonzero(~np.isfinite(V).all(axis=1))[0][0])
        raise MeshValidationError("vertex", bad, "non-finite coordinate")
    span = float(np.ptp(V, axis=0).max()) if len(V) else 1.0
    span = span if span > 0 else 1.0
    # repeated vertices
    keys = {}
    for i, p in enumerate(np.round(V / span, 12)):
        k = tuple(p)
        if k in keys:
            raise MeshValidationError("vertex", i, f"duplicates vertex {keys[k]}")
        keys[k] = i

    seen = set()
    for i, (a, b) in enumerate(mesh.edges):
        if a == b:
            raise MeshValidationError("edge", i, "degenerate edge")
        if not (0 <= a < mesh.n_vertices and 0 <= b < mesh.n_vertices):
            raise MeshValidationError("edge", i, "vertex id out of range")
        if (a, b) in seen:
            raise MeshValidationError("edge", i, "duplicate edge")
        seen.add((a, b))

    used_edges: set[int] = set()
    if d == 2:
        _validate_2d(mesh, used_edges, span)
    else:
        _validate_3d(mesh, used_edges, tol_planar)
    unused = sorted(set(range(mesh.n_edges)) - used_edges)
    if unused:
        raise MeshValidationError("edge", unused[0], "edge not used by any cell")


def _validate_2d(mesh: PolytopalMesh, used_edges: set, span: float) -> None:
    V = mesh.vertices
    directed: dict[tuple[int, int], int] = {}
    for c, loop in enumerate(mesh.cells):
        _check_loop_edges(mesh, loop, "cell", c, used_edges)
        pts = V[list(loop)]
        area = _signed_area_2d(pts)
        scale = float(np.ptp(pts, axis=0).max())
        if abs(area) <= 1e-14 * scale * scale:
            raise MeshValidationError("cell", c, "zero-area polygon")
        if area < 0:
            raise MeshValidationError("cell", c, "vertex loop is clockwise")
        if not _is_simple_loop(pts, scale):
            raise MeshValidationError("cell", c, "vertex loop is not a simple polygon")
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            if (a, b) in directed:
                raise MeshValidationError(
                    "cell", c, f"edge ({a}, {b}) traversed in the same direction as cell {directed[(a, b)]}"
                )
            directed[(a, b)] = c


def _validate_3d(mesh: PolytopalMesh, used_edges: set, tol_planar: float) -> None:
    V = mesh.vertices
    for f, loop in enumerate(mesh.faces):
        _check_loop_edges(mesh, loop, "face", f, used_edges)
        pts = V[list(loop)]
        nrm = _newell_normal(pts)
        area = float(np.linalg.norm(nrm))
        h_f = float(max(np.linalg.norm(p - q) for p in pts for q in pts))
        if area <= 1e-14 * h_f * h_f:
            raise MeshValidationError("face", f, "zero-area face")
        n = nrm / area
        dist = np.abs((pts - pts.mean(axis=0)) @ n)
        # best-fit plane (least squares) distance
        _, _, vt = np.linalg.svd(pts - pts.mean(axis=0))
        dist_fit = np.abs((pts - pts.mean(axis=0)) @ vt[-1])
        if min(dist.max(), dist_fit.max()) > tol_planar * h_f:
            raise MeshValidationError("face", f, f"non-planar face (deviation {dist_fit.max():.3e})")
        u1 = pts[1] - pts[0]
        u1 = u1 - n * (u1 @ n)
        u1 /= np.linalg.norm(u1)
        u2 = np.cross(n, u1)
        p2 = np.stack([(pts - pts[0]) @ u1, (pts - pts[0]) @ u2], axis=1)
        if not _is_simple_loop(p2, h_f):
            raise MeshValidationError("face", f, "vertex loop is not a simple polygon")

    uses: dict[int, list[tuple[int, int]]] = {}
    for c, cell in enumerate(mesh.cells):
        if len(cell) < 4:
            raise MeshValidationError("cell", c, "fewer than 4 faces")
        for f, s in cell:
            if not 0 <= f < len(mesh.faces):
                raise MeshValidationError("cell", c, f"face id {f} out of range")
            if s not in (1, -1):
                raise MeshValidationError("cell", c, f"orientation sign {s} is not +-1")
            uses.setdefault(f, []).append((c, s))
        if len({f for f, _ in cell}) != len(cell):
            raise MeshValidationError("cell", c, "face listed twice")
        _check_cell_closed(mesh, c)
    for f in range(len(mesh.faces)):
        u = uses.get(f, [])
        if not u:
            raise MeshValidationError("face", f, "face not used by any cell")
        if len(u) > 2:
            raise MeshValidationError("face", f, f"shared by {len(u)} cells")
        if len(u) == 2 and u[0][1] == u[1][1]:
            raise MeshValidationError(
                "face", f, f"cells {u[0][0]} and {u[1][0]} use it with the same orientation sign"
            )


def _check_cell_closed(mesh: PolytopalMesh, c: int) -> None:
    cell = mesh.cells[c]
    directed: dict[tuple[int, int], list[int]] = {}
    for k, (f, _) in enumerate(cell):
        loop = mesh.oriented_face_loop(c, k)
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            directed.setdefault((a, b), []).append(f)
    conflicts: dict[int, int] = {}
    for (a, b), fs in directed.items():
        back = directed.get((b, a), [])
        if len(fs) != 1 or len(back) != 1:
            for f in fs:
                conflicts[f] = conflicts.get(f, 0) + 1
    if conflicts:
        worst = max(sorted(conflicts), key=lambda f: conflicts[f])
        raise MeshValidationError(
            "face", worst, f"orientation inconsistent with the other faces of cell {c}"
        )
    vol = _cell_signed_volume(mesh, c)
    if vol <= 0:
        raise MeshValidationError("cell", c, "faces are oriented inward (non-positive volume)")


def _cell_signed_volume(mesh: PolytopalMesh, c: int) -> float:
    V = mesh.vertices
    ref = V[mesh.cell_vertex_ids(c)].mean(axis=0)
    vol = 0.0
    for k in range(len(mesh.cells[c])):
        pts = V[list(mesh.oriented_face_loop(c, k))] - ref
        vol += float(_newell_normal(pts) @ pts.mean(axis=0)) / 3.0
    return vol
