"""Reconstruction of the DOF basis functions of the four spaces on a simplex sub-tessellation.

Every routine returns the basis as per-simplex affine data ``a (m, d, n)``,
``M (m, d, d, n)`` (column ``j`` is the virtual function with unit DOF
``j``), plus the piecewise-constant derivative that the space controls.

Fields are linear per simplex: BDM1 (linear H(div)) for the face spaces and
second-kind linear Nedelec (NED2) with a quadratic Lagrange gauge for Edge3D.

* Face spaces: a function with constant normal components, constant
  divergence and constant rotation/curl splits as ``psi = grad Psi + sum_i c_i w_i``
  where ``w_i = q_i + grad phi_i`` has zero normal trace, zero divergence
  and unit rotation/curl. ``q_i`` is the linear rotation field
  (``x_F^perp`` in 2D, ``e_i x x / 2`` in 3D), so both ``grad Psi`` and
  ``grad phi_i`` come from mixed BDM1-P0 Neumann solves with piecewise
  linear flux data. ``c`` enforces the enhancing constraint.
* Edge2D: the quarter turn of the Face2D reconstruction.
* Edge3D: per-face Edge2D reconstructions give the tangential trace; a
  gauged NED2 solve extends it with ``curl curl v = 0``, and
  ``sum_i c_i rho_i`` (``curl curl rho_i = e_i``, zero trace) adds the
  constant ``curl curl v = c`` fixed by ``int curl v . (x_E x q) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..mesh.geometry import PolygonGeometry, PolyhedronGeometry
from ..mesh.submesh import SimplexSubmesh
from .fem import SimplexComplex, curl_of, gather_field, local_mass, mass_products, scatter

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


class OracleError(RuntimeError):
    """A local oracle system could not be solved."""

    def __init__(self, element: int, reason: str):
        self.element = element
        super().__init__(f"element {element}: {reason}")


@dataclass(frozen=True, eq=False)
class Basis:
    """Reconstructed DOF basis on one submesh."""

    complex: SimplexComplex
    a: np.ndarray  # (m, d, n)
    M: np.ndarray  # (m, d, d, n)
    deriv: np.ndarray  # (m, n) div / rot, or (m, 3, n) curl
    condition: float = float("nan")

    @property
    def n(self) -> int:
        return self.a.shape[-1]


def _factor(K: sp.spmatrix, element: int, what: str):
    try:
        lu = spla.splu(sp.csc_matrix(K))
    except RuntimeError as exc:  # singular factor
        raise OracleError(element, f"singular {what} system ({exc})") from None
    return lu


def _solve(lu, rhs: np.ndarray, element: int, what: str) -> np.ndarray:
    x = lu.solve(np.asarray(rhs, dtype=float))
    if not np.isfinite(x).all():
        raise OracleError(element, f"non-finite solution of the {what} system")
    return x


def _small_solve(A: np.ndarray, b: np.ndarray, element: int) -> np.ndarray:
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise OracleError(element, f"ill-conditioned constraint system (cond {cond:.2e})")
    return np.linalg.solve(A, b)


def _facet_measures(cx: SimplexComplex, facets: np.ndarray) -> np.ndarray:
    p = cx.points[facets]
    if cx.dim == 2:
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def _affine_field(cx: SimplexComplex, A: np.ndarray, center: np.ndarray):
    """The linear field ``A (x - center)`` as per-simplex affine data with one column."""
    a = (cx.centroids - center) @ A.T
    M = np.broadcast_to(A, (cx.n_simplices,) + A.shape)
    return a[..., None], np.ascontiguousarray(M)[..., None]


def _outward_signs(cx: SimplexComplex, fids: np.ndarray) -> np.ndarray:
    """``+1`` where the stored normal of a boundary facet points out of the submesh."""
    owner = np.empty(len(cx.facets), dtype=np.int64)
    local = np.empty(len(cx.facets), dtype=np.int64)
    m, k = cx.simplex_facets.shape
    owner[cx.simplex_facets.ravel()] = np.repeat(np.arange(m), k)
    local[cx.simplex_facets.ravel()] = np.tile(np.arange(k), m)
    opposite = cx.points[cx.simplices[owner[fids], local[fids]]]
    out = cx.points[cx.facets[fids, 0]] - opposite
    return np.sign(np.einsum("fp,fp->f", out, cx.facet_normals[fids]))


class MixedSystem:
    """BDM1-P0 Neumann problem with a zero-mean multiplier, factorized once.

    Solves for ``sigma`` with ``div sigma = c`` (constant) and prescribed
    normal components at the vertices of every boundary facet.
    """

    def __init__(self, cx: SimplexComplex, bfacets: np.ndarray, element: int):
        self.cx, self.element = cx, element
        d, m = cx.dim, cx.n_simplices
        self.a_loc, self.M_loc, self.dofs, div_loc = cx.bdm1_local()
        nd = d * len(cx.facets)
        A = scatter(local_mass(cx, self.a_loc, self.M_loc), self.dofs, self.dofs, (nd, nd))
        rows = np.repeat(np.arange(m), self.dofs.shape[1])
        B = sp.coo_matrix(((div_loc * cx.volumes[:, None]).ravel(), (rows, self.dofs.ravel())), shape=(m, nd)).tocsr()

        self.bid = cx.facet_index(bfacets)
        if not cx.boundary_facet_mask[self.bid].all() or cx.boundary_facet_mask.sum() != len(self.bid):
            raise OracleError(element, "boundary facets of the submesh do not match the element faces")
        self.bdofs = (d * self.bid[:, None] + np.arange(d)).ravel()
        self.idofs = np.setdiff1d(np.arange(nd), self.bdofs)
        self.A, self.B = A, B
        w = cx.volumes[:, None]
        K = sp.bmat(
            [
                [A[self.idofs][:, self.idofs], B[:, self.idofs].T, None],
                [B[:, self.idofs], None, sp.csr_matrix(w)],
                [None, sp.csr_matrix(w.T), None],
            ],
            format="csc",
        )
        self.lu = _factor(K, element, "mixed flux")
        self.nd = nd

    def solve(self, bvals: np.ndarray, cdiv: np.ndarray) -> np.ndarray:
        """BDM1 coefficients ``(n_dofs, k)``; ``bvals`` is ``(len(bdofs), k)``."""
        cx, ib, ii = self.cx, self.bdofs, self.idofs
        rhs = np.vstack(
            [
                -self.A[ii][:, ib] @ bvals,
                cx.volumes[:, None] * cdiv[None, :] - self.B[:, ib] @ bvals,
                np.zeros((1, bvals.shape[1])),
            ]
        )
        sol = _solve(self.lu, rhs, self.element, "mixed flux")
        coef = np.zeros((self.nd, bvals.shape[1]))
        coef[ib] = bvals
        coef[ii] = sol[: len(ii)]
        return coef

    def fields(self, coef: np.ndarray):
        return gather_field(self.a_loc, self.M_loc, self.dofs, coef)

    def boundary_points(self) -> np.ndarray:
        """Points carrying the boundary DOFs, in ``bdofs`` order."""
        return self.cx.points[self.cx.facets[self.bid]].reshape(-1, self.cx.dim)

    def boundary_normals(self) -> np.ndarray:
        return np.repeat(self.cx.facet_normals[self.bid], self.cx.dim, axis=0)


def _rotation_fields(dim: int) -> list[np.ndarray]:
    """Matrices ``Q`` of the linear fields ``Q (x - center)`` with unit rotation/curl and no divergence."""
    if dim == 2:
        return [0.5 * ROT]
    return [0.5 * np.cross(np.eye(3)[i], np.eye(3)).T for i in range(3)]  # e_i x y


def _constraint_fields(dim: int) -> list[np.ndarray]:
    """Matrices of the enhancing-constraint test fields, ``x^perp`` in 2D, ``x x e_j`` in 3D."""
    if dim == 2:
        return [ROT]
    return [np.cross(np.eye(3), np.eye(3)[j]).T for j in range(3)]  # (x x e_j) = E x


def face_basis(
    cx: SimplexComplex,
    bfacets: np.ndarray,
    bparent: np.ndarray,
    n: int,
    center: np.ndarray,
    element: int = -1,
) -> Basis:
    """Face-space basis for a polygon (2D) or polyhedron (3D) meshed by ``cx``."""
    d = cx.dim
    mixed = MixedSystem(cx, bfacets, element)
    sign = _outward_signs(cx, mixed.bid)
    bpar = np.repeat(np.asarray(bparent), d)

    # columns 0..n-1: unit DOFs; further columns: rotation carriers
    flux = np.zeros((len(mixed.bdofs), n))
    flux[np.arange(len(bpar)), bpar] = np.repeat(sign, d)
    meas = _facet_measures(cx, cx.facets[mixed.bid])
    cdiv = np.bincount(np.asarray(bparent), meas, minlength=n) / cx.volumes.sum()

    Qs = _rotation_fields(d)
    y = mixed.boundary_points() - center
    nrm = mixed.boundary_normals()
    qflux = np.column_stack([-np.einsum("bp,pq,bq->b", nrm, Q, y) for Q in Qs])
    coef = mixed.solve(np.hstack([flux, qflux]), np.concatenate([cdiv, np.zeros(len(Qs))]))
    a, M = mixed.fields(coef)
    for i, Q in enumerate(Qs):
        qa, qM = _affine_field(cx, Q, center)
        a[..., n + i] += qa[..., 0]
        M[..., n + i] += qM[..., 0]

    # enhancing constraint
    moments = np.empty((len(Qs), n + len(Qs)))
    for j, E in enumerate(_constraint_fields(d)):
        xa, xM = _affine_field(cx, E, center)
        moments[j] = mass_products(cx, a, M, xa, xM)[:, 0]
    A = moments[:, n:]
    c = -_small_solve(A, moments[:, :n], element)
    a = a[..., :n] + a[..., n:] @ c
    M = M[..., :n] + M[..., n:] @ c
    return Basis(cx, a, M, np.einsum("mppk->mk", M), condition=float(np.linalg.cond(A)))


def face2d_basis(
    points: np.ndarray,
    tris: np.ndarray,
    bedges: np.ndarray,
    bparent: np.ndarray,
    n: int,
    center: np.ndarray,
    element: int = -1,
) -> Basis:
    cx = SimplexComplex(np.asarray(points, float), np.asarray(tris, np.int64))
    return face_basis(cx, bedges, bparent, n, center, element)


def face3d_basis(sub: SimplexSubmesh, geom: PolyhedronGeometry) -> Basis:
    cx = SimplexComplex(sub.points, sub.simplices)
    return face_basis(cx, sub.facets, sub.facet_parent, geom.n_faces, geom.barycenter, geom.element)


@dataclass(eq=False)
class CurlSystem:
    """Gauged NED2 system on a tetrahedral submesh, factorized once.

    Interior unknowns are the NED2 DOFs off the boundary and a quadratic
    Lagrange multiplier vanishing on the boundary (discrete ``div = 0``).
    """

    cx: SimplexComplex
    element: int

    def __post_init__(self):
        cx = self.cx
        self.a_loc, self.M_loc, self.dofs, self.curl_loc = cx.ned2_local()
        nd, np2 = 2 * len(cx.edges), cx.n_p2
        vol = cx.volumes
        Kloc = vol[:, None, None] * np.einsum("mip,mjp->mij", self.curl_loc, self.curl_loc)
        self.K = scatter(Kloc, self.dofs, self.dofs, (nd, nd))
        ga, gM, pids = cx.p2_grad_local()
        self.G = scatter(local_mass(cx, self.a_loc, self.M_loc, ga, gM), self.dofs, pids, (nd, np2))
        bmask = np.repeat(cx.boundary_edge_mask, 2)
        self.ie = np.nonzero(~bmask)[0]
        self.be = np.nonzero(bmask)[0]
        self.inode = np.nonzero(~cx.boundary_p2_mask)[0]
        Kii = self.K[self.ie][:, self.ie]
        Gii = self.G[self.ie][:, self.inode]
        S = sp.bmat([[Kii, Gii], [Gii.T, None]], format="csc")
        self.lu = _factor(S, self.element, "curl-curl")
        self.n_dofs = nd

    def solve(self, load: np.ndarray, boundary: np.ndarray) -> np.ndarray:
        """NED2 coefficients with prescribed boundary DOFs and interior load ``(n_dofs, k)``."""
        ie, be, inode = self.ie, self.be, self.inode
        rhs = np.vstack(
            [
                load[ie] - self.K[ie][:, be] @ boundary[be],
                -(self.G[be][:, inode].T @ boundary[be]),
            ]
        )
        sol = _solve(self.lu, rhs, self.element, "curl-curl")
        out = boundary.copy()
        out[ie] = sol[: len(ie)]
        return out

    def fields(self, coef: np.ndarray):
        a, M = gather_field(self.a_loc, self.M_loc, self.dofs, coef)
        return a, M, np.moveaxis(curl_of(np.moveaxis(M, -1, 1)), 1, 2)  # curl (m, 3, k)

    def unit_curl_potentials(self):
        """``rho_i`` with ``curl curl rho_i = e_i`` and zero tangential trace."""
        cx = self.cx
        load = np.zeros((self.n_dofs, 3))
        for i in range(3):
            # the integral of an affine function is the volume times its centroid value
            np.add.at(load[:, i], self.dofs.ravel(), (cx.volumes[:, None] * self.a_loc[:, :, i]).ravel())
        return self.solve(load, np.zeros((self.n_dofs, 3)))

    def constraint_moments(self, curl: np.ndarray, center: np.ndarray) -> np.ndarray:
        """``int f_k . (x_E x e_j)`` for piecewise-constant fields ``f (m, 3, k)``; shape (3, k)."""
        cx = self.cx
        y = cx.centroids - center
        out = np.empty((3, curl.shape[-1]))
        for j in range(3):
            xe = np.cross(y, np.eye(3)[j])  # centroid value of x_E x e_j (exact mean)
            out[j] = np.einsum("m,mp,mpk->k", cx.volumes, xe, curl)
        return out


def face_triangulation(sub: SimplexSubmesh, k: int, poly: PolygonGeometry):
    """Boundary facets of face ``k`` as a 2D triangulation in the face frame.

    Returns (point ids into ``sub.points``, local 2D points, triangles,
    boundary edges, polygon edge of each boundary edge).
    """
    tris3 = sub.facets[sub.facet_parent == k]
    ids, inv = np.unique(tris3, return_inverse=True)
    tris = inv.reshape(tris3.shape)
    pts2 = poly.to_local(sub.points[ids])
    pairs = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    bedges = uniq[counts == 1]
    mids = 0.5 * (pts2[bedges[:, 0]] + pts2[bedges[:, 1]])
    # distance of each midpoint to each polygon edge segment
    P = poly.vertices
    Q = np.roll(P, -1, axis=0)
    dvec = Q - P
    t = np.clip(np.einsum("bep,ep->be", mids[:, None, :] - P[None], dvec) / (dvec**2).sum(1), 0, 1)
    proj = P[None] + t[..., None] * dvec[None]
    parent = np.argmin(np.linalg.norm(mids[:, None, :] - proj, axis=2), axis=1)
    return ids, pts2, tris, bedges, parent


def _trace_dofs(sub: SimplexSubmesh, geom: PolyhedronGeometry, cx: SimplexComplex) -> np.ndarray:
    """Boundary NED2 DOFs ``(n_dofs, n_cell_edges)`` from the per-face Edge2D reconstructions."""
    ne_cell = geom.n_edges
    out = np.zeros((2 * len(cx.edges), ne_cell))
    for k, face in enumerate(geom.faces):
        poly = face.polygon
        ids, pts2, tris, bedges, parent = face_triangulation(sub, k, poly)
        fb = face2d_basis(pts2, tris, bedges, parent, poly.n_edges, poly.barycenter, geom.element)
        # the Edge2D trace is the quarter turn of the Face2D reconstruction
        av = np.einsum("pq,mqk->mpk", ROT, fb.a)
        Mv = np.einsum("pq,mqrk->mprk", ROT, fb.M)
        S = np.zeros((poly.n_edges, ne_cell))
        S[np.arange(poly.n_edges), face.cell_edge_index] = poly.edge_signs
        cen = fb.complex.centroids
        for i, j in ((0, 1), (1, 2), (2, 0)):
            u, w = tris[:, i], tris[:, j]
            lo = np.where(ids[u] < ids[w], u, w)
            hi = np.where(ids[u] < ids[w], w, u)
            t = pts2[hi] - pts2[lo]
            t /= np.linalg.norm(t, axis=1, keepdims=True)
            rows = cx.edge_index(np.stack([ids[lo], ids[hi]], axis=1))
            for end, node in enumerate((lo, hi)):
                val = av + np.einsum("mpqk,mq->mpk", Mv, pts2[node] - cen)
                out[2 * rows + end] = np.einsum("mpk,mp->mk", val, t) @ S
    return out


def edge3d_basis(sub: SimplexSubmesh, geom: PolyhedronGeometry) -> Basis:
    cx = SimplexComplex(sub.points, sub.simplices)
    cs = CurlSystem(cx, geom.element)
    boundary = _trace_dofs(sub, geom, cx)
    coef = cs.solve(np.zeros_like(boundary), boundary)
    a, M, curl = cs.fields(coef)
    rho = cs.unit_curl_potentials()
    a_r, M_r, curl_r = cs.fields(rho)
    A = cs.constraint_moments(curl_r, geom.barycenter)
    c = -_small_solve(A, cs.constraint_moments(curl, geom.barycenter), geom.element)
    a = a + a_r @ c
    M = M + M_r @ c
    curl = curl + curl_r @ c
    return Basis(cx, a, M, curl, condition=float(np.linalg.cond(A)))
