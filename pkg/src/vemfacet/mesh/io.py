"""Reader and writer for the ``polymesh-v1`` text format.

Layout (``#`` starts a comment, blank lines are ignored, ids are 0-based)::

    polymesh-v1
    dimension 3
    vertices 8
    0.0 0.0 0.0
    ...
    edges 12
    0 1
    ...
    faces 6            # 3D only: vertex count followed by the loop
    4 0 3 2 1
    ...
    cells 1
    6 0 1 1 1 2 1 3 1 4 1 5 1     # 3D: face count, then (face, sign) pairs
    # 2D cells: vertex count followed by the counterclockwise loop
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import TOL_PLANAR, MeshParseError, PolytopalMesh

HEADER = "polymesh-v1"


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


class _Reader:
    def __init__(self, text: str):
        self._lines = list(_tokens(text))
        self._pos = 0

    def next(self, what: str) -> tuple[int, list[str]]:
        if self._pos >= len(self._lines):
            raise MeshParseError(f"unexpected end of file while reading {what}")
        item = self._lines[self._pos]
        self._pos += 1
        return item

    def peek(self):
        return self._lines[self._pos] if self._pos < len(self._lines) else None

    def section(self, name: str) -> int:
        lineno, tok = self.next(f"'{name}' section")
        if len(tok) != 2 or tok[0] != name:
            raise MeshParseError(f"line {lineno}: expected '{name} <count>', got {' '.join(tok)!r}")
        return _int(tok[1], lineno)


def _int(s: str, lineno: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise MeshParseError(f"line {lineno}: expected integer, got {s!r}") from None


def _float(s: str, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise MeshParseError(f"line {lineno}: expected number, got {s!r}") from None


def parse_mesh(text: str, validate: bool = True, tol_planar: float = TOL_PLANAR) -> PolytopalMesh:
    r = _Reader(text)
    lineno, tok = r.next("header")
    if tok != [HEADER]:
        raise MeshParseError(f"line {lineno}: missing '{HEADER}' header")
    lineno, tok = r.next("dimension")
    if len(tok) != 2 or tok[0] != "dimension":
        raise MeshParseError(f"line {lineno}: expected 'dimension <2|3>'")
    dim = _int(tok[1], lineno)
    if dim not in (2, 3):
        raise MeshParseError(f"line {lineno}: dimension must be 2 or 3")

    nv = r.section("vertices")
    verts = np.empty((nv, dim))
    for i in range(nv):
        lineno, tok = r.next("vertex coordinates")
        if len(tok) != dim:
            raise MeshParseError(f"line {lineno}: vertex {i} needs {dim} coordinates")
        verts[i] = [_float(t, lineno) for t in tok]

    ne = r.section("edges")
    edges = np.empty((ne, 2), dtype=np.int64)
    for i in range(ne):
        lineno, tok = r.next("edge")
        if len(tok) != 2:
            raise MeshParseError(f"line {lineno}: edge {i} needs 2 vertex ids")
        edges[i] = [_int(t, lineno) for t in tok]

    faces: list[tuple[int, ...]] = []
    if dim == 3:
        nf = r.section("faces")
        for i in range(nf):
            lineno, tok = r.next("face")
            k = _int(tok[0], lineno)
            if len(tok) != k + 1:
                raise MeshParseError(f"line {lineno}: face {i} declares {k} vertices, lists {len(tok) - 1}")
            faces.append(tuple(_int(t, lineno) for t in tok[1:]))

    nc = r.section("cells")
    cells: list[tuple] = []
    for i in range(nc):
        lineno, tok = r.next("cell")
        k = _int(tok[0], lineno)
        if dim == 2:
            if len(tok) != k + 1:
                raise MeshParseError(f"line {lineno}: cell {i} declares {k} vertices, lists {len(tok) - 1}")
            cells.append(tuple(_int(t, lineno) for t in tok[1:]))
        else:
            if len(tok) != 2 * k + 1:
                raise MeshParseError(f"line {lineno}: cell {i} declares {k} faces, lists {(len(tok) - 1) / 2}")
            vals = [_int(t, lineno) for t in tok[1:]]
            cells.append(tuple(zip(vals[0::2], vals[1::2])))
    if r.peek() is not None:
        lineno, _ = r.peek()
        raise MeshParseError(f"line {lineno}: trailing content after cells section")

    mesh = PolytopalMesh(dim, verts, edges, tuple(faces), tuple(cells))
    if validate:
        mesh.validate(tol_planar)
    return mesh


def load_mesh(path: str | os.PathLike, validate: bool = True, tol_planar: float = TOL_PLANAR) -> PolytopalMesh:
    """Read and validate a ``polymesh-v1`` file."""
    return parse_mesh(Path(path).read_text(), validate=validate, tol_planar=tol_planar)


def format_mesh(mesh: PolytopalMesh) -> str:
    lines = [HEADER, f"dimension {mesh.dimension}", f"vertices {mesh.n_vertices}"]
    lines += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]
    lines.append(f"edges {mesh.n_edges}")
    lines += [f"{a} {b}" for a, b in mesh.edges]
    if mesh.dimension == 3:
        lines.append(f"faces {len(mesh.faces)}")
        lines += [" ".join(map(str, (len(f),) + f)) for f in mesh.faces]
    lines.append(f"cells {mesh.n_cells}")
    for c in mesh.cells:
        if mesh.dimension == 2:
            lines.append(" ".join(map(str, (len(c),) + c)))
        else:
            lines.append(" ".join([str(len(c))] + [f"{f} {s}" for f, s in c]))
    return "\n".join(lines) + "\n"


def save_mesh(mesh: PolytopalMesh, path: str | os.PathLike) -> None:
    Path(path).write_text(format_mesh(mesh))
