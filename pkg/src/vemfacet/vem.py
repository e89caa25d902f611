"""The four lowest-order virtual element spaces at the level of their DOFs.

Spaces and DOFs (one value per entity, entity averages):

* ``FACE2D`` on a polygon: ``psi . n_e`` on every edge (outward normal).
* ``EDGE2D`` on a polygon: ``v . t_e`` on every edge (counterclockwise tangent).
* ``FACE3D`` on a polyhedron: ``psi . n_F`` on every face (outward normal).
* ``EDGE3D`` on a polyhedron: ``v . t~_e`` on every edge, against the global
  tangent running from the lower to the higher vertex id.

Polygon DOFs follow the loop order of the polygon; polyhedron DOFs follow
the cell's face list and its sorted edge ids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .calculus import AnalyticField, Field, PolyField, edge_average, integrate
from .mesh.geometry import ElementGeometry, PolygonGeometry, PolyhedronGeometry

# analytic fields: Gauss degree 10 on once-refined face fans, 2 x 6-point Gauss on edges
ANALYTIC_DEGREE = 10
ANALYTIC_FACE_LEVEL = 1
ANALYTIC_EDGE_PIECES = 2

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])  # counterclockwise quarter turn


class SpaceTag(str, enum.Enum):
    FACE2D = "face2d"
    EDGE2D = "edge2d"
    FACE3D = "face3d"
    EDGE3D = "edge3d"

    @property
    def dimension(self) -> int:
        return 2 if self in (SpaceTag.FACE2D, SpaceTag.EDGE2D) else 3

    @property
    def is_face(self) -> bool:
        return self in (SpaceTag.FACE2D, SpaceTag.FACE3D)

    @classmethod
    def parse(cls, name) -> "SpaceTag":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        for tag in cls:
            if tag.value == key:
                return tag
        raise ValueError(f"unknown space {name!r}; choose one of {', '.join(t.value for t in cls)}")


class SpaceMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DofVector:
    """DOF values of one virtual function on one element."""

    space: SpaceTag
    values: np.ndarray
    geometry: ElementGeometry = field(repr=False)

    def __post_init__(self):
        space = SpaceTag.parse(self.space)
        vals = np.array(self.values, dtype=float).reshape(-1)
        n = n_dofs(space, self.geometry)
        if len(vals) != n:
            raise ValueError(f"{space.value} on element {self.geometry.element} has {n} DOFs, got {len(vals)}")
        vals.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", vals)

    @property
    def element(self) -> int:
        return self.geometry.element

    def __len__(self) -> int:
        return len(self.values)

    def __add__(self, other: "DofVector") -> "DofVector":
        _same(self, other)
        return DofVector(self.space, self.values + other.values, self.geometry)

    def __sub__(self, other: "DofVector") -> "DofVector":
        _same(self, other)
        return DofVector(self.space, self.values - other.values, self.geometry)

    def __mul__(self, s: float) -> "DofVector":
        return DofVector(self.space, float(s) * self.values, self.geometry)

    __rmul__ = __mul__

    def entity_ids(self) -> np.ndarray:
        return entity_ids(self.space, self.geometry)

    def to_json(self) -> dict:
        return {
            "space": self.space.value,
            "element": int(self.element),
            "dofs": [{"entity": int(e), "value": float(v)} for e, v in zip(self.entity_ids(), self.values)],
        }


def _same(a: DofVector, b: DofVector) -> None:
    if a.space != b.space or a.geometry is not b.geometry:
        raise SpaceMismatch(f"DOF vectors of {a.space.value}/{a.element} and {b.space.value}/{b.element} do not match")


def _check(space: SpaceTag, geom) -> SpaceTag:
    space = SpaceTag.parse(space)
    if space.dimension == 2 and not isinstance(geom, PolygonGeometry):
        raise SpaceMismatch(f"{space.value} binds to polygons, got a polyhedron")
    if space.dimension == 3 and not isinstance(geom, PolyhedronGeometry):
        raise SpaceMismatch(f"{space.value} binds to polyhedra, got a polygon")
    return space


def _expect(d: DofVector, *tags: SpaceTag) -> None:
    if d.space not in tags:
        raise SpaceMismatch(f"expected {' or '.join(t.value for t in tags)} DOFs, got {d.space.value}")


def n_dofs(space, geom) -> int:
    space = _check(space, geom)
    if space == SpaceTag.FACE3D:
        return geom.n_faces
    return geom.n_edges


def entity_ids(space, geom) -> np.ndarray:
    """Mesh ids of the entities carrying the DOFs (faces, edges)."""
    space = _check(space, geom)
    if space == SpaceTag.FACE3D:
        return np.array([f.face_id for f in geom.faces], dtype=np.int64)
    return np.asarray(geom.edge_ids, dtype=np.int64)


def dof_directions(space, geom) -> np.ndarray:
    """Unit vectors ``(n_dofs, dim)`` such that a constant ``c`` has DOFs ``directions @ c``."""
    space = _check(space, geom)
    if space == SpaceTag.FACE3D:
        return np.array([f.normal for f in geom.faces])
    if space == SpaceTag.EDGE3D:
        return geom.edge_tangents
    if space == SpaceTag.FACE2D:
        return geom.edge_normals
    return geom.edge_tangents


def constant_dofs(space, c, geom) -> DofVector:
    space = _check(space, geom)
    return DofVector(space, dof_directions(space, geom) @ np.asarray(c, dtype=float), geom)


# ---------------------------------------------------------------------------
# interpolation


def _field_shape(field: Field) -> tuple:
    return tuple(getattr(field, "shape", ()))


def _polygon_edge_values(geom: PolygonGeometry, field: Field, dirs: np.ndarray) -> np.ndarray:
    """Averages of ``field . dir_e`` over each polygon edge; 3D fields are read through the face frame."""
    three_d = field.dim == 3
    if three_d and geom.axes is None:
        raise SpaceMismatch("a 3D field needs a polygon embedded in 3D")
    if not three_d and field.dim != 2:
        raise SpaceMismatch(f"field of dimension {field.dim} on a polygon")
    gdirs = geom.vectors_to_global(dirs) if three_d else dirs
    out = np.empty(geom.n_edges)
    nv = len(geom.vertices)
    for i in range(geom.n_edges):
        a, b = geom.vertices[i], geom.vertices[(i + 1) % nv]
        if three_d:
            a, b = geom.to_global(a[None])[0], geom.to_global(b[None])[0]
        out[i] = _segment_average(a, b, field) @ gdirs[i]
    return out


def _segment_average(a, b, field: Field) -> np.ndarray:
    if isinstance(field, PolyField):
        return edge_average(a, b, field, degree=max(field.degree, 1))
    return edge_average(a, b, field, degree=ANALYTIC_DEGREE, pieces=ANALYTIC_EDGE_PIECES)


def extract_dofs(space, field: Field, geom: ElementGeometry) -> DofVector:
    """Interpolate ``field`` into the space: entity averages of its normal/tangential components.

    Polynomial fields are integrated exactly; analytic fields with composite
    Gauss rules of degree 10.
    """
    space = _check(space, geom)
    dim = space.dimension
    shape = _field_shape(field)
    if space == SpaceTag.FACE2D or space == SpaceTag.EDGE2D:
        if shape not in ((2,), (3,)) or (shape == (3,)) != (field.dim == 3):
            raise SpaceMismatch(f"{space.value} needs a 2D vector field (or 3D on an embedded face), got shape {shape}")
    elif shape != (dim,) or field.dim != dim:
        raise SpaceMismatch(f"{space.value} needs a {dim}D vector field, got shape {shape} in {field.dim}D")

    if space == SpaceTag.FACE2D:
        vals = _polygon_edge_values(geom, field, geom.edge_normals)
    elif space == SpaceTag.EDGE2D:
        vals = _polygon_edge_values(geom, field, geom.edge_tangents)
    elif space == SpaceTag.FACE3D:
        vals = np.empty(geom.n_faces)
        for k, face in enumerate(geom.faces):
            if isinstance(field, PolyField):
                mean = integrate(face, field, degree=field.degree) / face.area
            else:
                mean = integrate(face, field, degree=ANALYTIC_DEGREE, level=ANALYTIC_FACE_LEVEL) / face.area
            vals[k] = mean @ face.normal
    else:
        pos = {int(v): j for j, v in enumerate(geom.vertex_ids)}
        vals = np.empty(geom.n_edges)
        for i, (a, b) in enumerate(geom.edge_vertices):
            avg = _segment_average(geom.vertices[pos[int(a)]], geom.vertices[pos[int(b)]], field)
            vals[i] = avg @ geom.edge_tangents[i]
    return DofVector(space, vals, geom)


# ---------------------------------------------------------------------------
# derived constants


def div_constant(d: DofVector) -> float:
    """The constant divergence of a face-space function (divergence theorem on the DOFs)."""
    _expect(d, SpaceTag.FACE3D, SpaceTag.FACE2D)
    g = d.geometry
    if d.space == SpaceTag.FACE3D:
        areas = np.array([f.area for f in g.faces])
        return float(d.values @ areas / g.measure)
    return float(d.values @ g.edge_lengths / g.measure)


def rot_constant(d: DofVector) -> float:
    """The constant rot_F of a 2D edge-space function (Stokes on the DOFs)."""
    _expect(d, SpaceTag.EDGE2D)
    g = d.geometry
    return float(d.values @ g.edge_lengths / g.measure)


def face_edge_dofs(d: DofVector, k: int) -> DofVector:
    """Edge2D DOFs of the tangential trace on face ``k`` of an Edge3D function."""
    _expect(d, SpaceTag.EDGE3D)
    face = d.geometry.faces[k]
    poly = face.polygon
    return DofVector(SpaceTag.EDGE2D, poly.edge_signs * d.values[face.cell_edge_index], poly)


def curl_image(d: DofVector) -> DofVector:
    """Face3D DOFs of the curl of an Edge3D function: per face, Stokes on its boundary."""
    _expect(d, SpaceTag.EDGE3D)
    g = d.geometry
    vals = [rot_constant(face_edge_dofs(d, k)) for k in range(g.n_faces)]
    return DofVector(SpaceTag.FACE3D, vals, g)


# ---------------------------------------------------------------------------
# projection onto constants


def pi0_matrix(space, geom) -> np.ndarray:
    """``P`` with ``pi0(d) = P @ d.values``; shape ``(dim, n_dofs)``."""
    space = _check(space, geom)
    if space == SpaceTag.FACE2D:
        # int_F psi = sum_e d_e h_e (m_e - x_F)
        return ((geom.edge_midpoints - geom.barycenter) * geom.edge_lengths[:, None]).T / geom.measure
    if space == SpaceTag.EDGE2D:
        return ROT @ pi0_matrix(SpaceTag.FACE2D, geom)
    if space == SpaceTag.FACE3D:
        cols = [f.area * (f.centroid - geom.barycenter) for f in geom.faces]
        return np.array(cols).T / geom.measure
    # Edge3D: int_K v = -1/2 sum_F [n_F (c_F . I_F) - delta_F I_F], with I_F = int_F v^F and
    # c_F = x_F - x_E, delta_F = n_F . c_F; I_F depends linearly on the face's Edge2D DOFs.
    P = np.zeros((3, geom.n_edges))
    for face in geom.faces:
        poly = face.polygon
        # I_F in global coordinates as a linear map of the element DOFs
        local = poly.measure * poly.axes.T @ pi0_matrix(SpaceTag.EDGE2D, poly)  # (3, n_face_edges)
        M = np.zeros((3, geom.n_edges))
        M[:, face.cell_edge_index] = local * poly.edge_signs[None, :]
        c = face.centroid - geom.barycenter
        delta = face.normal @ c
        P += -0.5 * (np.outer(face.normal, c @ M) - delta * M)
    return P / geom.measure


def pi0(d: DofVector) -> np.ndarray:
    """L2 projection of the virtual function onto constant vectors, from its DOFs alone.

    2D results on faces of a polyhedron are in the face frame coordinates.
    """
    return pi0_matrix(d.space, d.geometry) @ d.values


# ---------------------------------------------------------------------------
# stabilizations and discrete inner products


def stabilization_weights(space, geom) -> np.ndarray:
    """Diagonal of the stabilization matrix in the DOF basis."""
    space = _check(space, geom)
    if space == SpaceTag.FACE3D:
        return geom.diameter * np.array([f.area for f in geom.faces])
    if space == SpaceTag.EDGE3D:
        # each edge once per incident face
        w = np.zeros(geom.n_edges)
        for face in geom.faces:
            np.add.at(w, face.cell_edge_index, face.polygon.edge_lengths)
        return geom.diameter**2 * w
    return geom.diameter * geom.edge_lengths


def stabilization_matrix(space, geom) -> np.ndarray:
    return np.diag(stabilization_weights(space, geom))


def stabilization(d1: DofVector, d2: DofVector) -> float:
    _same(d1, d2)
    return float((stabilization_weights(d1.space, d1.geometry) * d1.values) @ d2.values)


def inner_matrix(space, geom) -> np.ndarray:
    """Matrix of the discrete inner product ``|K| pi0 . pi0 + S((I - pi0) ., (I - pi0) .)``."""
    space = _check(space, geom)
    P = pi0_matrix(space, geom)
    C = dof_directions(space, geom)
    R = np.eye(C.shape[0]) - C @ P
    return geom.measure * P.T @ P + R.T @ stabilization_matrix(space, geom) @ R


def discrete_inner(d1: DofVector, d2: DofVector) -> float:
    _same(d1, d2)
    p1, p2 = pi0(d1), pi0(d2)
    r1 = d1 - constant_dofs(d1.space, p1, d1.geometry)
    r2 = d2 - constant_dofs(d2.space, p2, d2.geometry)
    return float(d1.geometry.measure * p1 @ p2 + stabilization(r1, r2))


# ---------------------------------------------------------------------------
# quarter-turn duality between the 2D spaces


def rotate(d: DofVector) -> DofVector:
    """Reinterpret DOFs across the quarter turn ``v = R psi``.

    The Edge2D function ``R psi`` has the same DOF values as the Face2D
    function ``psi`` (since ``R psi . t_e = psi . n_e``), and vice versa.
    """
    _expect(d, SpaceTag.FACE2D, SpaceTag.EDGE2D)
    other = SpaceTag.EDGE2D if d.space == SpaceTag.FACE2D else SpaceTag.FACE2D
    return DofVector(other, d.values, d.geometry)
