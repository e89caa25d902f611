"""Shape-regularity metrics of polytopal meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PolytopalMesh
from .geometry import PolygonGeometry, geometry


@dataclass(frozen=True)
class RegularityMetrics:
    """Per-element regularity data.

    ``gamma`` is twice the smallest distance from the barycenter to a face
    plane (edge line in 2D) divided by the element diameter: a lower bound for
    the diameter ratio of a ball the element is star-shaped with respect to.
    """

    gamma: np.ndarray
    face_ratio: np.ndarray  # min over faces of h_F / h_E (edges in 2D)
    edge_ratio: np.ndarray  # min over faces, edges of h_e / h_F (1 in 2D)
    n_faces: np.ndarray
    max_edges_per_face: np.ndarray
    threshold: float = 0.0

    @property
    def gamma_min(self) -> float:
        return float(self.gamma.min())

    @property
    def flagged(self) -> np.ndarray:
        """Elements whose gamma falls below ``threshold``."""
        return np.nonzero(self.gamma < self.threshold)[0]

    def summary(self) -> dict:
        return {
            "gamma_min": self.gamma_min,
            "face_ratio_min": float(self.face_ratio.min()),
            "edge_ratio_min": float(self.edge_ratio.min()),
            "max_faces": int(self.n_faces.max()),
            "max_edges_per_face": int(self.max_edges_per_face.max()),
            "n_flagged": int(len(self.flagged)),
        }


def element_gamma(geom) -> float:
    if isinstance(geom, PolygonGeometry):
        d = ((geom.barycenter - geom.edge_midpoints) * geom.edge_normals).sum(axis=1)
        return float(2 * np.abs(d).min() / geom.diameter)
    d = [abs(float(f.normal @ (f.centroid - geom.barycenter))) for f in geom.faces]
    return 2 * min(d) / geom.diameter


def regularity_report(mesh: PolytopalMesh, threshold: float = 0.2) -> RegularityMetrics:
    gam, fr, er, nf, mef = [], [], [], [], []
    for c in range(mesh.n_cells):
        g = geometry(mesh, c)
        gam.append(element_gamma(g))
        if isinstance(g, PolygonGeometry):
            fr.append(g.edge_lengths.min() / g.diameter)
            er.append(1.0)
            nf.append(g.n_edges)
            mef.append(2)
        else:
            fr.append(min(f.diameter for f in g.faces) / g.diameter)
            er.append(min(f.polygon.edge_lengths.min() / f.diameter for f in g.faces))
            nf.append(g.n_faces)
            mef.append(max(f.polygon.n_edges for f in g.faces))
    return RegularityMetrics(
        np.array(gam), np.array(fr), np.array(er), np.array(nf), np.array(mef), threshold
    )
