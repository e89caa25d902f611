import numpy as np
import pytest

from vemfacet.calculus import (
    AnalyticField,
    OperatorError,
    PolyField,
    QuadratureError,
    Segment,
    apply_diff,
    integrate,
    simplex_quadrature,
)
from vemfacet.mesh.geometry import make_polygon
from vemfacet.studies.fields import builtin_field, field_names


def test_integral_closed_forms(square, cube):
    q = PolyField.affine([1.0, 0.0], 0.0, [0.5, 0.5])
    sq = PolyField.fit(lambda x: q(x) ** 2, 2, (), 2, [0.5, 0.5])
    assert integrate(square, sq) == pytest.approx(1 / 12, abs=1e-15)
    assert integrate(cube, PolyField.constant(1.0, 3)) == pytest.approx(1.0, abs=1e-15)
    xf = PolyField.identity(square.barycenter)
    xperp = PolyField.perp(square.barycenter)
    assert abs(integrate(square, xf.dot(xperp))) < 1e-15


def test_operator_closed_forms(cube, square):
    assert np.allclose(apply_diff("div", PolyField.identity(cube.barycenter)).coef[0], 3.0)
    assert np.allclose(apply_diff("rot_F", PolyField.perp(square.barycenter)).coef[0], 2.0)
    v = PolyField.affine([[0, -1, 0], [1, 0, 0], [0, 0, 0]], [0, 0, 0], cube.barycenter)
    curl = apply_diff("curl", v)
    assert np.allclose(curl.coef[:, 0], [0, 0, 2]) and np.allclose(curl.coef[:, 1:], 0)


def test_operator_errors():
    with pytest.raises(OperatorError):
        apply_diff("curl", PolyField.perp([0, 0]))
    with pytest.raises(OperatorError):
        apply_diff("rot_F", PolyField.identity([0, 0, 0]))
    with pytest.raises(QuadratureError):
        integrate(Segment(np.zeros(2), np.ones(2)), lambda x: x[:, 0], degree=11)


@pytest.mark.parametrize("elem", ["hexagon", "distorted_quad"])
def test_green_identities_2d(elem, request, rng):
    g = request.getfixturevalue(elem)
    for _ in range(5):
        q = PolyField.random(2, (2,), 2, rng, g.barycenter)
        lhs = integrate(g, apply_diff("div", q))
        rhs = sum(
            integrate(Segment(g.vertices[i], g.vertices[(i + 1) % len(g.vertices)]), lambda x, n=n: q(x) @ n, degree=2)
            for i, n in enumerate(g.edge_normals)
        )
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
        lhs = integrate(g, apply_diff("rot_F", q))
        rhs = sum(
            integrate(Segment(g.vertices[i], g.vertices[(i + 1) % len(g.vertices)]), lambda x, t=t: q(x) @ t, degree=2)
            for i, t in enumerate(g.edge_tangents)
        )
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_green_identities_3d(distorted_hex, rng):
    g = distorted_hex
    for _ in range(5):
        q = PolyField.random(3, (3,), 2, rng, g.barycenter)
        lhs = integrate(g, apply_diff("div", q))
        rhs = sum(integrate(f, lambda x, n=f.normal: q(x) @ n, degree=2) for f in g.faces)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
        # Stokes on each face with the in-plane field
        for f in g.faces:
            pg = f.polygon
            qf = PolyField.fit(lambda s: pg.vectors_to_local(q(pg.to_global(s))), 2, (2,), 2, np.zeros(2))
            lhs = integrate(pg, apply_diff("rot_F", q, f))
            rhs = sum(
                integrate(Segment(pg.vertices[i], pg.vertices[(i + 1) % len(pg.vertices)]), lambda x, t=t: qf(x) @ t, degree=2)
                for i, t in enumerate(pg.edge_tangents)
            )
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_complex_identities(rng):
    for _ in range(5):
        p = PolyField.random(3, (), 2, rng, rng.random(3))
        assert np.abs(apply_diff("curl", apply_diff("grad", p)).coef).max() < 1e-13
        v = PolyField.random(3, (3,), 2, rng, rng.random(3))
        assert np.abs(apply_diff("div", apply_diff("curl", v)).coef).max() < 1e-13
        s = PolyField.random(2, (), 2, rng, rng.random(2))
        assert np.abs(apply_diff("div_F", apply_diff("curl_F", s)).coef).max() < 1e-13


def test_rot_frame_independence(distorted_hex, rng):
    f = distorted_hex.faces[0]
    pg = f.polygon
    th = 0.7
    R = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
    axes2 = R @ pg.axes
    pts2 = pg.vertices @ R.T
    other = make_polygon(pg.element, pg.vertex_ids, pts2, pg.edge_ids, origin=pg.origin, axes=axes2)
    q = PolyField.random(3, (3,), 2, rng, distorted_hex.barycenter)
    x = pg.to_global(pg.vertices)
    r1 = apply_diff("rot_F", q, pg)(pg.to_local(x))
    r2 = apply_diff("rot_F", q, other)(other.to_local(x))
    assert np.abs(r1 - r2).max() <= 1e-12 * max(1.0, np.abs(r1).max())


def test_simplex_quadrature_exact(rng):
    pts = rng.random((4, 3))
    simp = np.array([[0, 1, 2, 3]])
    x, w = simplex_quadrature(pts, simp, 4)
    vol = abs(np.linalg.det(pts[1:] - pts[0])) / 6
    assert w.sum() == pytest.approx(vol, rel=1e-13)
    # exact for a quartic against the fine composite rule's limit
    f = lambda y: (y[..., 0] - y[..., 1]) ** 2 * y[..., 2] ** 2  # noqa: E731
    exact = (w * f(x)).sum()
    x8, w8 = simplex_quadrature(pts, simp, 8)
    assert (w8 * f(x8)).sum() == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_builtin_fields_self_test(dim):
    for name in field_names(dim):
        space = "edge2d" if dim == 2 else "edge3d"
        errs = builtin_field(name, space).self_test(n=32)
        assert all(e < 1e-6 for e in errs.values())


def test_self_test_catches_wrong_derivative():
    bad = AnalyticField(2, lambda x: np.stack([x[:, 1], -x[:, 0]], 1), (2,), rot=lambda x: np.full(len(x), 2.0))
    with pytest.raises(ValueError):
        bad.self_test()
