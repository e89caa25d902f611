"""Lowest-order finite elements on a simplex sub-tessellation.

Every field is stored per simplex as an affine map in centroid coordinates,
``u(x) = a_k + M_k (x - c_k)``, which covers the linear H(div) elements
(Brezzi-Douglas-Marini), the linear H(curl) elements of the second kind and
gradients of quadratic Lagrange functions. L2 products of such fields are
exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import factorial

import numpy as np
import scipy.sparse as sp


def _unique_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique rows of an integer array and the inverse index."""
    rows = np.sort(rows, axis=1)
    uniq, inv = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1)


@dataclass(frozen=True, eq=False)
class SimplexComplex:
    """Vertices, edges and facets of a conforming simplex mesh of dimension d = 2 or 3."""

    points: np.ndarray
    simplices: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @cached_property
    def _jac(self) -> np.ndarray:
        p = self.points[self.simplices]
        return np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))  # columns p_i - p_0

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self._jac)) / factorial(self.dim)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.points[self.simplices].mean(axis=1)

    @cached_property
    def grads(self) -> np.ndarray:
        """Barycentric gradients ``(m, d+1, d)``."""
        inv = np.linalg.inv(self._jac)  # rows: grad lambda_1..d
        g0 = -inv.sum(axis=1, keepdims=True)
        return np.concatenate([g0, inv], axis=1)

    @cached_property
    def second_moments(self) -> np.ndarray:
        """``int_T (x - c)(x - c)^T`` per simplex."""
        q = self.points[self.simplices] - self.centroids[:, None, :]
        d = self.dim
        return self.volumes[:, None, None] / ((d + 1) * (d + 2)) * np.einsum("mip,miq->mpq", q, q)

    # edges ------------------------------------------------------------------------

    @cached_property
    def local_edges(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.dim + 1), 2))

    @cached_property
    def _edges(self):
        rows = np.concatenate([self.simplices[:, [i, j]] for i, j in self.local_edges])
        uniq, inv = _unique_rows(rows)
        return uniq, inv.reshape(len(self.local_edges), -1).T

    @property
    def edges(self) -> np.ndarray:
        return self._edges[0]

    @property
    def simplex_edges(self) -> np.ndarray:
        return self._edges[1]

    # facets -----------------------------------------------------------------------

    @cached_property
    def _facets(self):
        d = self.dim
        opp = [[j for j in range(d + 1) if j != i] for i in range(d + 1)]
        rows = np.concatenate([self.simplices[:, o] for o in opp])
        uniq, inv = _unique_rows(rows)
        inv = inv.reshape(d + 1, -1).T  # (m, d+1): facet opposite local vertex i
        counts = np.bincount(inv.ravel(), minlength=len(uniq))
        return uniq, inv, counts == 1

    @property
    def facets(self) -> np.ndarray:
        return self._facets[0]

    @property
    def simplex_facets(self) -> np.ndarray:
        return self._facets[1]

    @property
    def boundary_facet_mask(self) -> np.ndarray:
        return self._facets[2]

    def facet_index(self, facets: np.ndarray) -> np.ndarray:
        """Ids of the given facets (vertex tuples in any order)."""
        keys = np.sort(np.asarray(facets), axis=1)
        table = {tuple(r): i for i, r in enumerate(self.facets)}
        return np.array([table[tuple(r)] for r in keys], dtype=np.int64)

    def edge_index(self, pairs: np.ndarray) -> np.ndarray:
        keys = np.sort(np.asarray(pairs), axis=1)
        table = {tuple(r): i for i, r in enumerate(self.edges)}
        return np.array([table[tuple(r)] for r in keys], dtype=np.int64)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.facets[self.boundary_facet_mask])

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        bf = self.facets[self.boundary_facet_mask]
        pairs = np.concatenate([bf[:, [i, j]] for i, j in combinations(range(bf.shape[1]), 2)])
        mask = np.zeros(len(self.edges), dtype=bool)
        mask[np.unique(self.edge_index(pairs))] = True
        return mask

    # local bases ------------------------------------------------------------------

    @cached_property
    def facet_normals(self) -> np.ndarray:
        """Unit normal of every facet, fixed by its sorted vertex order."""
        p = self.points[self.facets]
        if self.dim == 2:
            t = p[:, 1] - p[:, 0]
            n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def edge_tangents(self) -> np.ndarray:
        """Unit tangent of every edge, from the lower to the higher point id."""
        p = self.points[self.edges]
        t = p[:, 1] - p[:, 0]
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    def _dual_basis(self, dirs: np.ndarray, nodes: np.ndarray):
        """Affine fields dual to the functionals ``u -> dirs[m, b] . u(points[nodes[m, b]])``."""
        m, d = self.n_simplices, self.dim
        y = self.points[nodes] - self.centroids[:, None, :]  # (m, nb, d)
        # parameters: a (d) then M row-major (d*d)
        Phi = np.concatenate([dirs, np.einsum("mbp,mbq->mbpq", dirs, y).reshape(m, -1, d * d)], axis=2)
        theta = np.linalg.inv(Phi)  # columns: basis functions
        a = np.transpose(theta[:, :d, :], (0, 2, 1))
        M = np.transpose(theta[:, d:, :].reshape(m, d, d, -1), (0, 3, 1, 2))
        return a, M

    def bdm1_local(self):
        """Linear H(div) basis (normal component at the facet vertices).

        Returns ``a (m, nb, d)``, ``M (m, nb, d, d)``, global DOF ids and the
        divergence ``(m, nb)``. Global DOF ``d * f + i`` is the normal
        component along ``facet_normals[f]`` at the ``i``-th sorted vertex of
        facet ``f``.
        """
        d = self.dim
        fac = self.simplex_facets  # (m, d+1)
        verts = self.facets[fac]  # (m, d+1, d) sorted vertex ids
        dirs = np.repeat(self.facet_normals[fac], d, axis=1)
        a, M = self._dual_basis(dirs, verts.reshape(len(fac), -1))
        dofs = (d * fac[:, :, None] + np.arange(d)).reshape(len(fac), -1)
        return a, M, dofs, np.einsum("mbpp->mb", M)

    def ned2_local(self):
        """Linear H(curl) basis (tangential component at both edge ends).

        Global DOF ``2 * e + i`` is the component along ``edge_tangents[e]``
        at point ``edges[e, i]``. The last return value is the constant curl
        ``(m, nb, 3)`` in 3D or rot ``(m, nb)`` in 2D.
        """
        ed = self.simplex_edges  # (m, ne)
        nodes = self.edges[ed]  # (m, ne, 2)
        dirs = np.repeat(self.edge_tangents[ed], 2, axis=1)
        a, M = self._dual_basis(dirs, nodes.reshape(len(ed), -1))
        dofs = (2 * ed[:, :, None] + np.arange(2)).reshape(len(ed), -1)
        return a, M, dofs, curl_of(M)

    def p2_grad_local(self):
        """Gradients of the quadratic Lagrange basis as affine fields.

        Global ids: point ``i`` for vertex functions, ``n_points + e`` for
        the function of edge ``e``.
        """
        d = self.dim
        g = self.grads  # (m, d+1, d)
        lam_c = 1.0 / (d + 1)
        a_v = (4 * lam_c - 1) * g
        M_v = 4 * np.einsum("mip,miq->mipq", g, g)
        li, lj = np.array(self.local_edges).T
        gi, gj = g[:, li], g[:, lj]
        a_e = 4 * lam_c * (gi + gj)
        M_e = 4 * (np.einsum("mep,meq->mepq", gj, gi) + np.einsum("mep,meq->mepq", gi, gj))
        ids = np.concatenate([self.simplices, len(self.points) + self.simplex_edges], axis=1)
        return np.concatenate([a_v, a_e], axis=1), np.concatenate([M_v, M_e], axis=1), ids

    @property
    def n_p2(self) -> int:
        return len(self.points) + len(self.edges)

    @cached_property
    def boundary_p2_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_p2, dtype=bool)
        mask[self.boundary_nodes] = True
        mask[len(self.points) :][self.boundary_edge_mask] = True
        return mask


def curl_of(M: np.ndarray) -> np.ndarray:
    """Curl (3D) or rot (2D) of affine fields from their Jacobians ``(..., d, d)``."""
    if M.shape[-1] == 2:
        return M[..., 1, 0] - M[..., 0, 1]
    return np.stack([M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0], M[..., 1, 0] - M[..., 0, 1]], axis=-1)


# ---------------------------------------------------------------------------
# assembly helpers


def local_mass(cx: SimplexComplex, a1, M1, a2=None, M2=None) -> np.ndarray:
    """Local L2 products ``(m, n1, n2)`` of per-simplex affine bases."""
    if a2 is None:
        a2, M2 = a1, M1
    out = cx.volumes[:, None, None] * np.einsum("mip,mjp->mij", a1, a2)
    out += np.einsum("mipq,mjpr,mqr->mij", M1, M2, cx.second_moments)
    return out


def scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    """Assemble ``(m, n1, n2)`` local blocks into a sparse matrix."""
    m, n1, n2 = local.shape
    R = np.broadcast_to(rows[:, :, None], (m, n1, n2))
    C = np.broadcast_to(cols[:, None, :], (m, n1, n2))
    return sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()


def gather_field(local_a: np.ndarray, local_M: np.ndarray, dofs: np.ndarray, coeffs: np.ndarray):
    """Per-simplex affine data of ``sum_j coeffs[j] phi_j``; ``coeffs`` may carry extra columns.

    Returns ``a (m, d, k)`` and ``M (m, d, d, k)`` for ``coeffs`` of shape ``(n, k)``.
    """
    c = coeffs[dofs]  # (m, nb, k)
    return np.einsum("mbp,mbk->mpk", local_a, c), np.einsum("mbpq,mbk->mpqk", local_M, c)


def mass_products(cx: SimplexComplex, a1, M1, a2, M2) -> np.ndarray:
    """``int u_i . w_j`` for column families ``u = (a1, M1)`` and ``w = (a2, M2)`` of shape (m, d, [d,] k)."""
    out = np.einsum("m,mpi,mpj->ij", cx.volumes, a1, a2)
    out += np.einsum("mpqi,mprj,mqr->ij", M1, M2, cx.second_moments)
    return out
