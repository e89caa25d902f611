import numpy as np
import pytest

from vemfacet.calculus import AnalyticField, PolyField
from vemfacet.oracle import OracleError, gram_matrix, l2_distance, reconstruct, workspace
from vemfacet.oracle.core import geometry_key
from vemfacet.vem import (
    DofVector,
    constant_dofs,
    curl_image,
    div_constant,
    extract_dofs,
    n_dofs,
    pi0,
    rot_constant,
)

LEVEL = {2: 3, 3: 2}


def _rotation3(center):
    return PolyField.affine([[0, -1, 0], [1, 0, 0], [0, 0, 0]], [0, 0, 0], center)


def _random(space, geom, rng):
    return DofVector(space, rng.standard_normal(n_dofs(space, geom)), geom)


def test_constant_edge2d_any_level(square):
    d = constant_dofs("edge2d", [1.0, 0.0], square)
    one = PolyField.constant([1.0, 0.0], 2)
    for L in range(4):
        f = reconstruct(d, L)
        assert l2_distance(f, one) < 1e-12
        assert np.abs(f.reextract().values - d.values).max() <= 1e-10


def test_perp_edge2d_reproduced(square):
    xp = PolyField.perp(square.barycenter)
    d = extract_dofs("edge2d", xp, square)
    errs = [l2_distance(reconstruct(d, L), xp) for L in (1, 2, 3)]
    # the second-order oracle holds x^perp exactly at every level
    assert max(errs) < 1e-13


def test_position_face3d_cube(cube):
    xe = PolyField.identity(cube.barycenter)
    d = extract_dofs("face3d", xe, cube)
    f = reconstruct(d, 1)
    assert l2_distance(f, xe) < 1e-13
    assert np.abs(f.M - np.eye(3)).max() < 1e-12  # curl of the reconstruction is zero


def test_l2_distance_examples(square):
    xp = PolyField.perp(square.barycenter)
    f = reconstruct(extract_dofs("edge2d", xp, square), 2)
    assert l2_distance(f, f) <= 1e-14
    zero = PolyField.constant([0.0, 0.0], 2)
    assert l2_distance(f, zero) == pytest.approx(1 / np.sqrt(6), rel=1e-12)
    g = reconstruct(extract_dofs("edge2d", xp, square), 3)
    assert l2_distance(f, g) <= 1e-14


def test_l2_distance_rejects_other_element(square, hexagon):
    f = reconstruct(constant_dofs("edge2d", [1, 0], square), 1)
    g = reconstruct(constant_dofs("edge2d", [1, 0], hexagon), 1)
    with pytest.raises(ValueError):
        l2_distance(f, g)


def test_gram_examples(square):
    G = gram_matrix("edge2d", square, 3)
    assert G.matrix.shape == (4, 4)
    assert np.abs(G.matrix - G.matrix.T).max() <= 1e-12
    assert G.eigenvalues.min() > 0
    d = constant_dofs("edge2d", [1.0, 0.0], square).values
    assert d @ G.matrix @ d == pytest.approx(1.0, abs=1e-12)
    p = np.full(4, 0.5)
    assert abs(p @ G.matrix @ p - 1 / 6) <= 1e-4


@pytest.mark.parametrize("space", ["face2d", "edge2d", "face3d", "edge3d"])
def test_gram_spd(space, request):
    g = request.getfixturevalue("distorted_hex" if space.endswith("3d") else "hexagon")
    G = gram_matrix(space, g, LEVEL[3 if space.endswith("3d") else 2])
    assert np.abs(G.matrix - G.matrix.T).max() <= 1e-12 * np.abs(G.matrix).max()
    assert G.eigenvalues.min() > 0


@pytest.mark.parametrize("space", ["face2d", "edge2d", "face3d", "edge3d"])
def test_roundtrip_and_constraints(space, request, rng):
    g = request.getfixturevalue("distorted_hex" if space.endswith("3d") else "distorted_quad")
    L = LEVEL[3 if space.endswith("3d") else 2]
    for _ in range(3):
        d = _random(space, g, rng)
        f = reconstruct(d, L)
        scale = np.linalg.norm(d.values)
        assert np.linalg.norm(f.reextract().values - d.values) <= max(f.accuracy_estimate, 1e-12 * scale)
        assert np.abs(f.constraint_residual()).max() <= max(f.accuracy_estimate, 1e-12 * scale) * g.diameter


@pytest.mark.parametrize("space", ["face2d", "edge2d", "face3d"])
def test_derivative_is_the_dof_constant(space, request, rng):
    g = request.getfixturevalue("distorted_hex" if space.endswith("3d") else "hexagon")
    d = _random(space, g, rng)
    f = reconstruct(d, LEVEL[3 if space.endswith("3d") else 2])
    c = rot_constant(d) if space == "edge2d" else div_constant(d)
    assert np.abs(f.deriv - c).max() <= 1e-10 * max(1.0, abs(c))


def test_edge3d_curl_matches_face_reconstruction(distorted_hex, rng):
    # the curl of the edge reconstruction is piecewise constant, so it meets the
    # (piecewise affine) face reconstruction of the curl image at first order
    d = _random("edge3d", distorted_hex, rng)
    gaps = []
    for L in (1, 2):
        f = reconstruct(d, L)
        g = reconstruct(curl_image(d), L)
        curl = AnalyticField(3, lambda x, f=f: f.deriv[f.locate(x)], (3,), name="curl")
        gaps.append(l2_distance(g, curl))
        assert np.abs(g.reextract().values - curl_image(d).values).max() < 1e-10
    assert gaps[0] / gaps[1] > 1.5


@pytest.mark.parametrize("space", ["face2d", "edge2d", "face3d", "edge3d"])
def test_pi0_matches_oracle_mean(space, request, rng):
    g = request.getfixturevalue("distorted_hex" if space.endswith("3d") else "hexagon")
    for _ in range(3):
        d = _random(space, g, rng)
        f = reconstruct(d, LEVEL[3 if space.endswith("3d") else 2])
        err = np.linalg.norm(pi0(d) - f.mean()) * np.sqrt(g.measure)
        assert err <= 3 * f.accuracy_estimate + 1e-12


def test_in_space_fields_reproduced(distorted_hex):
    b = distorted_hex.barycenter
    for space, field in (("face3d", PolyField.identity(b)), ("edge3d", _rotation3(b))):
        f = reconstruct(extract_dofs(space, field, distorted_hex), 1)
        assert l2_distance(f, field) < 1e-12


def test_accuracy_estimate_decreases(hexagon, rng):
    for space in ("face2d", "edge2d"):
        d = _random(space, hexagon, rng)
        est = [reconstruct(d, L).accuracy_estimate for L in (1, 2, 3)]
        assert est[0] > est[1] > est[2]


def test_accuracy_estimate_decreases_3d(distorted_hex, rng):
    d = _random("edge3d", distorted_hex, rng)
    est = [reconstruct(d, L).accuracy_estimate for L in (1, 2)]
    assert est[0] > est[1]


def test_workspace_cache_shares_translated_copies():
    from vemfacet.mesh import FamilySpec, generate_family, geometry

    m = generate_family(FamilySpec("squares", (1 / 4,)))[0]
    a, b = geometry(m, 0), geometry(m, 5)
    assert geometry_key(a) == geometry_key(b)
    assert workspace("face2d", a, 2) is workspace("face2d", b, 2)
    d = np.arange(4.0)
    fa = reconstruct(DofVector("face2d", d, a), 2)
    fb = reconstruct(DofVector("face2d", d, b), 2)
    assert np.array_equal(fa.a, fb.a) and np.array_equal(fa.M, fb.M)
    assert np.allclose(fb.complex.points - fa.complex.points, b.vertices[0] - a.vertices[0])


def test_negative_level_rejected(square):
    with pytest.raises(ValueError):
        reconstruct(constant_dofs("edge2d", [1, 0], square), -1)


def test_oracle_error_names_element():
    err = OracleError(17, "singular local system")
    assert "element 17" in str(err)
