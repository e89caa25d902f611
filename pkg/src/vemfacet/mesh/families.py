"""Built-in mesh families of the unit square and the unit cube."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MeshError, PolytopalMesh
from .regularity import regularity_report

FAMILIES_2D = ("squares", "distorted-quads", "hexagons")
FAMILIES_3D = ("cubes", "distorted-hexes")
FAMILIES = FAMILIES_2D + FAMILIES_3D


class FamilyError(MeshError):
    pass


@dataclass(frozen=True)
class FamilySpec:
    """A mesh family: its name, target spacings and distortion settings.

    ``hs`` are target grid spacings: a family member at spacing ``h`` has
    ``round(1/h)`` cells per side, so square/cube diameters are ``sqrt(d) h``.
    ``jitter`` is the distortion amplitude as a fraction of the spacing.
    """

    name: str
    hs: tuple[float, ...]
    jitter: float = 0.0
    seed: int = 0
    gamma_min: float = 0.2
    extra: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        if self.name in FAMILIES_2D:
            return 2
        if self.name in FAMILIES_3D:
            return 3
        raise FamilyError(f"unknown mesh family {self.name!r}; choose one of {', '.join(FAMILIES)}")


def _cells_per_side(h: float) -> int:
    if not h > 0:
        raise FamilyError(f"target h must be positive, got {h}")
    return max(1, int(round(1.0 / h)))


def _mesh_from_loops_2d(points: np.ndarray, loops: list[list[int]]) -> PolytopalMesh:
    edges = sorted({tuple(sorted((l[i], l[(i + 1) % len(l)]))) for l in loops for i in range(len(l))})
    return PolytopalMesh(2, points, np.array(edges, dtype=np.int64), (), tuple(tuple(l) for l in loops))


def quad_grid(n: int, points: np.ndarray | None = None) -> PolytopalMesh:
    idx = lambda i, j: i + (n + 1) * j  # noqa: E731
    if points is None:
        g = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(g, g, indexing="xy")
        points = np.stack([X.ravel(), Y.ravel()], axis=1)
    loops = [[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)] for j in range(n) for i in range(n)]
    return _mesh_from_loops_2d(points, loops)


def distorted_quads(n: int, jitter: float, rng: np.random.Generator) -> PolytopalMesh:
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    shift = rng.uniform(-jitter, jitter, size=pts.shape) / n
    interior = (pts > 1e-12).all(axis=1) & (pts < 1 - 1e-12).all(axis=1)
    pts[interior] += shift[interior]
    return quad_grid(n, pts)


def _clip(poly: list[tuple[float, float]], axis: int, value: float, keep_below: bool):
    out = []
    n = len(poly)
    inside = lambda p: (p[axis] <= value + 1e-14) if keep_below else (p[axis] >= value - 1e-14)  # noqa: E731
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin, qin = inside(p), inside(q)
        if pin:
            out.append(p)
        if pin != qin:
            t = (value - p[axis]) / (q[axis] - p[axis])
            r = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
            r[axis] = value
            out.append(tuple(r))
    # drop repeated points produced by clipping through a vertex
    dedup = []
    for p in out:
        if not dedup or max(abs(p[0] - dedup[-1][0]), abs(p[1] - dedup[-1][1])) > 1e-12:
            dedup.append(p)
    if len(dedup) > 1 and max(abs(dedup[0][0] - dedup[-1][0]), abs(dedup[0][1] - dedup[-1][1])) <= 1e-12:
        dedup.pop()
    return dedup


def hexagons(n: int) -> PolytopalMesh:
    """Hexagonal tiling of the unit square, clipped at the boundary.

    Horizontal spacing ``1/n``; the row count is chosen so the interior
    hexagons are as close to regular as the square allows.
    """
    a = 1.0 / n
    m = max(2, int(round(2 * n / np.sqrt(3))))
    b = 1.0 / m
    index: dict[tuple[int, int], int] = {}
    pts: list[tuple[float, float]] = []
    loops = []

    def vid(p):
        key = (int(round(p[0] * 1e9)), int(round(p[1] * 1e9)))
        if key not in index:
            index[key] = len(pts)
            pts.append(p)
        return index[key]

    for j in range(m + 1):
        cy = j * b
        odd = j % 2
        ncols = n if odd else n + 1
        for i in range(ncols):
            cx = (i + 0.5 * odd) * a
            hexv = [
                (cx, cy - 2 * b / 3),
                (cx + a / 2, cy - b / 3),
                (cx + a / 2, cy + b / 3),
                (cx, cy + 2 * b / 3),
                (cx - a / 2, cy + b / 3),
                (cx - a / 2, cy - b / 3),
            ]
            poly = _clip(hexv, 0, 0.0, keep_below=False)
            poly = _clip(poly, 0, 1.0, keep_below=True)
            poly = _clip(poly, 1, 0.0, keep_below=False)
            poly = _clip(poly, 1, 1.0, keep_below=True)
            if len(poly) < 3:
                continue
            loops.append([vid(p) for p in poly])
    return _mesh_from_loops_2d(np.array(pts), loops)


def _hex_grid(n: int, points: np.ndarray) -> PolytopalMesh:
    N = n + 1
    vid = lambda i, j, k: i + N * (j + N * k)  # noqa: E731
    faces = []
    fidx = {}
    for i in range(N):
        for j in range(n):
            for k in range(n):
                fidx[("x", i, j, k)] = len(faces)
                faces.append((vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1)))
    for j in range(N):
        for i in range(n):
            for k in range(n):
                fidx[("y", i, j, k)] = len(faces)
                faces.append((vid(i, j, k), vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j, k)))
    for k in range(N):
        for i in range(n):
            for j in range(n):
                fidx[("z", i, j, k)] = len(faces)
                faces.append((vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k)))
    cells = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                cells.append(
                    (
                        (fidx[("x", i, j, k)], -1),
                        (fidx[("x", i + 1, j, k)], 1),
                        (fidx[("y", i, j, k)], -1),
                        (fidx[("y", i, j + 1, k)], 1),
                        (fidx[("z", i, j, k)], -1),
                        (fidx[("z", i, j, k + 1)], 1),
                    )
                )
    edges = sorted({tuple(sorted((f[i], f[(i + 1) % 4]))) for f in faces for i in range(4)})
    return PolytopalMesh(3, points, np.array(edges, dtype=np.int64), tuple(faces), tuple(cells))


def cube_grid(n: int) -> PolytopalMesh:
    g = np.linspace(0.0, 1.0, n + 1)
    Z, Y, X = np.meshgrid(g, g, g, indexing="ij")
    return _hex_grid(n, np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1))


def distorted_hexes(n: int, jitter: float, rng: np.random.Generator) -> PolytopalMesh:
    """Hexahedra cut out by three families of randomly shifted and tilted planes.

    Every grid plane ``x ~ i/n`` (and likewise in y, z) is replaced by a plane
    ``x = a_i + b_i (y - 1/2) + c_i (z - 1/2)``; vertices are the triple
    intersections, so every face is planar by construction. Boundary planes
    stay fixed.
    """
    h = 1.0 / n
    amp = 0.5 * jitter * h
    planes = []  # per axis: (n+1, 3) rows (offset, tilt1, tilt2)
    for _ in range(3):
        p = np.zeros((n + 1, 3))
        p[:, 0] = np.linspace(0.0, 1.0, n + 1)
        if n > 1:
            p[1:-1, 0] += rng.uniform(-amp, amp, n - 1)
            p[1:-1, 1:] = rng.uniform(-amp, amp, (n - 1, 2))
        planes.append(p)
    N = n + 1
    K, J, I = np.meshgrid(np.arange(N), np.arange(N), np.arange(N), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    A = np.zeros((len(I), 3, 3))
    rhs = np.zeros((len(I), 3))
    for ax, idx in enumerate((I, J, K)):
        o1, o2 = [q for q in range(3) if q != ax]
        off, t1, t2 = planes[ax][idx].T
        A[:, ax, ax] = 1.0
        A[:, ax, o1] = -t1
        A[:, ax, o2] = -t2
        rhs[:, ax] = off - 0.5 * t1 - 0.5 * t2
    pts = np.linalg.solve(A, rhs[..., None])[..., 0]
    return _hex_grid(n, pts)


def generate_family(spec: FamilySpec) -> list[PolytopalMesh]:
    """One validated mesh per target spacing in ``spec.hs``."""
    dim = spec.dimension
    if not 0.0 <= spec.jitter < 0.45:
        raise FamilyError(f"jitter {spec.jitter} outside [0, 0.45): cells could fold")
    if spec.name in ("squares", "cubes", "hexagons") and spec.jitter:
        raise FamilyError(f"family {spec.name!r} takes no jitter")
    meshes = []
    for h in spec.hs:
        n = _cells_per_side(h)
        rng = np.random.default_rng([spec.seed, n])
        if spec.name == "squares":
            mesh = quad_grid(n)
        elif spec.name == "distorted-quads":
            mesh = distorted_quads(n, spec.jitter, rng)
        elif spec.name == "hexagons":
            mesh = hexagons(n)
        elif spec.name == "cubes":
            mesh = cube_grid(n)
        else:
            mesh = distorted_hexes(n, spec.jitter, rng)
        assert mesh.dimension == dim
        mesh.validate()
        gmin = regularity_report(mesh).gamma_min
        if gmin < spec.gamma_min:
            raise FamilyError(
                f"{spec.name} at h={h}: jitter {spec.jitter} gives gamma {gmin:.3f} < gamma_min {spec.gamma_min}"
            )
        meshes.append(mesh)
    return meshes
