"""
Tests for the piecewise-linear DC functions and auras (kinemalab.dc_aura)

For debug information use:
pytest-3 --log-cli-level debug

"""

import os
import sys
import logging
import pytest
import numpy as np
# Look for the 'kinemalab' module from where the script is running
script_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.dirname(os.path.dirname(script_dir)))
from kinemalab import geom_core as gc
from kinemalab import dc_aura as dc
from kinemalab.misc import (PreconditionError, CertificationMissingError)


def abs_x1():
    """ |x1| in the plane """
    return dc.DCFunction(dc.PLConvex([[1, 0], [-1, 0]], [0, 0]))


def square_aura(lo=-1, hi=1):
    return dc.aura_polytope(gc.box([lo, lo], [hi, hi]))


def test_pl_convex():
    g = dc.PLConvex([[1, 0], [-1, 0], [0, 0], [1, 0]], [0, 0, 0, 0])
    # The zero piece is only active on a line and the last one is repeated
    assert len(g) == 2
    assert g([2.0, 5.0]) == pytest.approx(2.0)
    assert np.allclose(g(np.array([[-3.0, 0], [1.0, 1.0]])), [3.0, 1.0])
    assert list(g.active(np.array([0.0, 0.3]))) == [0, 1]
    with pytest.raises(PreconditionError):
        dc.PLConvex(np.zeros((0, 2)), [])


def test_pl_convex_operations():
    a = dc.PLConvex.affine([1, 0])
    b = dc.PLConvex.affine([0, 1], 1.0)
    s = a + b
    assert s([1.0, 2.0]) == pytest.approx(4.0)
    m = a.maximum(b)
    assert m([0.0, 0.0]) == pytest.approx(1.0)
    assert m([5.0, 0.0]) == pytest.approx(5.0)
    assert a.shifted(2.0)([1.0, 0.0]) == pytest.approx(3.0)


def test_dc_function():
    f = dc.DCFunction(dc.PLConvex.affine([1, 1]), dc.PLConvex([[1, 0], [0, 1]], [0, 0]))
    # x + y - max(x, y) = min(x, y)
    assert dc.evaluate(f, [2.0, 3.0]) == pytest.approx(2.0)
    assert f.to_dict()['g'] == [[1.0, 1.0, 0.0]]
    with pytest.raises(PreconditionError):
        dc.DCFunction(dc.PLConvex.zero(2), dc.PLConvex.zero(3))


def test_clarke_exact_is_smaller_than_the_superset():
    g = dc.PLConvex([[1], [-1]], [0, 0])
    f = dc.DCFunction(g, dc.PLConvex([[1], [-1]], [0, 0]))
    # f is identically zero
    assert np.allclose(dc.clarke_exact(f, [0.0]).points, [[0.0]])
    sup = dc.clarke_superset(f, [0.0])
    assert sup.max_norm == pytest.approx(2.0)


def test_clarke_of_abs():
    f = abs_x1()
    H = dc.clarke_exact(f, [0.0, 0.4])
    assert sorted(H.points[:, 0].tolist()) == [-1.0, 1.0]
    assert np.allclose(dc.clarke_exact(f, [0.5, 0.0]).points, [[1.0, 0.0]])


def test_min_norm_point():
    assert np.allclose(dc.min_norm_point([[1, 0], [0, 1]]), [0.5, 0.5])
    assert np.allclose(dc.min_norm_point([[1, 1], [2, 0], [2, 3]]), [1, 1])
    assert np.allclose(dc.min_norm_point([[1, 0], [-1, 1], [-1, -1]]), [0, 0], atol=1e-9)
    rng = np.random.default_rng(3)
    P = rng.standard_normal((30, 3)) + [4, 0, 0]
    x = dc.min_norm_point(P)
    # Optimality: the hull lies beyond the supporting plane at x
    assert np.min(P @ x) >= x @ x - 1e-8


def test_refinement_cells():
    cells = dc.refinement_cells(abs_x1(), gc.box([-1, -1], [1, 1]))
    by_dim = {}
    for c in cells:
        by_dim[c.dim] = by_dim.get(c.dim, 0) + 1
    logging.debug(by_dim)
    assert by_dim == {0: 6, 1: 7, 2: 2}
    assert sum(c.volume for c in cells if c.dim == 2) == pytest.approx(4.0)


def test_weak_regularity_square():
    f = square_aura()
    cert = f.certificate
    logging.debug(cert)
    assert cert.regular
    assert cert.eps0 == pytest.approx(1/np.sqrt(2))
    assert not cert.vacuous


def test_weak_regularity_cube():
    f = dc.aura_polytope(gc.box([-1, -1, -1], [1, 1, 1]))
    assert f.certificate.eps0 == pytest.approx(1/np.sqrt(3))


def test_weak_regularity_abs():
    cert = dc.weak_regularity(abs_x1(), 0.0, gc.box([-1, -1], [1, 1]), 1.0)
    assert cert.eps0 == pytest.approx(1.0)
    # The band crosses the kink
    cert = dc.weak_regularity(abs_x1(), -0.5, gc.box([-1, -1], [1, 1]), 1.0)
    assert not cert.regular
    assert cert.witness is not None
    assert abs(cert.witness[1][0]) < 1e-9
    with pytest.raises(PreconditionError):
        dc.weak_regularity(abs_x1(), 0.0, gc.box([-1, -1], [1, 1]), 0)


def test_weak_regularity_empty_band():
    cert = dc.weak_regularity(abs_x1(), 10.0, gc.box([-1, -1], [1, 1]), 1.0)
    assert cert.vacuous
    assert np.isinf(cert.eps0)
    assert cert.to_dict()['eps0'] is None


def test_certify_fails_at_a_peak():
    # 0.5 - |x1| has its ridge inside the band
    f = dc.DCFunction(dc.PLConvex.affine([0, 0], 0.5), dc.PLConvex([[1, 0], [-1, 0]], [0, 0]))
    with pytest.raises(CertificationMissingError):
        dc.certify(f, gc.box([-1, -1], [1, 1]))


def test_aura_from_sublevel():
    linf = dc.DCFunction(dc.PLConvex([[1, 0], [-1, 0], [0, 1], [0, -1]], [0, 0, 0, 0]))
    a = dc.aura_from_sublevel(linf, 1.0)
    assert a([0.0, 0.0]) == pytest.approx(0.0)
    assert a([0.5, 0.5]) == pytest.approx(0.0)
    assert a([2.0, 0.0]) == pytest.approx(1.0)
    assert a([-3.0, 2.0]) == pytest.approx(2.0)


def test_aura_min():
    f1 = square_aura(0, 1)
    f2 = square_aura(2, 3)
    m = dc.aura_min(f1, f2)
    for x in ([0.5, 0.5], [2.5, 2.5], [1.5, 1.5], [4.0, 0.0]):
        assert m(x) == pytest.approx(min(f1(x), f2(x)))


def test_compose_motion():
    f = square_aura()
    g = dc.compose_motion(f, gc.RigidMotion.planar(0.0, [3, 0]))
    assert g([3.0, 0.0]) == pytest.approx(0.0)
    assert g([5.0, 0.0]) == pytest.approx(1.0)
    r = dc.compose_motion(f, gc.RigidMotion.planar(np.pi/4, [0, 0]))
    # The rotated square reaches sqrt(2) along the axes
    assert r([np.sqrt(2) - 1e-3, 0.0]) == pytest.approx(0.0)
    assert r([2.0, 0.0]) > 0


def test_nor_eps_square():
    f = square_aura()
    K = f.certificate.window
    nor = dc.nor_eps(f, 0.5, K)
    dims = sorted((p.base_dim, p.patch_dim) for p in nor.pieces)
    assert dims == [(0, 1)]*4 + [(1, 0)]*4
    assert nor.contains([[1.0, 0.2]], [[1.0, 0.0]])
    assert not nor.contains([[1.0, 0.2]], [[0.0, 1.0]])
    measure = dc.nor_eps_measure(nor, rng=0)
    logging.debug('nor_eps measure {}'.format(measure))
    assert measure == pytest.approx(8 + 2*np.pi, abs=1e-6)


def test_nor_eps_clipped_corner():
    f = square_aura()
    nor = dc.nor_eps(f, 0.8, f.certificate.window)
    corners = [p for p in nor.pieces if p.base_dim == 0]
    assert all(p.clipped for p in corners)
    rng = np.random.default_rng(1)
    U = corners[0].sample_normals(200, rng)
    assert np.allclose(np.linalg.norm(U, axis=1), 1.0)
    assert np.all(corners[0].contains_normals(U))
    # Only directions with cos + sin <= 1/0.8 survive
    assert dc.nor_eps_measure(nor, n_mc=400000, rng=2) < 8 + 2*np.pi


def test_nor_eps_preconditions():
    f = abs_x1()
    with pytest.raises(PreconditionError):
        dc.nor_eps(f, 0.0, gc.box([-1, -1], [1, 1]))
    with pytest.raises(CertificationMissingError):
        dc.nor_eps(f, 0.5, gc.box([-1, -1], [1, 1]), certify_missing=False)


def test_transversality_generic():
    f = square_aura()
    g = square_aura()
    motion = gc.RigidMotion.planar(0.0, [1.0, 0.5])
    ok, gap = dc.transversality_check(f, g, motion, 0.5)
    logging.debug('gap {}'.format(gap))
    assert ok
    bound, witness = dc.eps0_bound(f, g, motion)
    logging.debug('eps0 bound {} at {}'.format(bound, witness))
    assert bound > 0
    assert witness is not None


def test_transversality_fails_on_a_shared_edge():
    f = square_aura(0, 1)
    g = square_aura(0, 1)
    motion = gc.RigidMotion.planar(0.0, [1.0, 0.0])
    ok, gap = dc.transversality_check(f, g, motion, 0.5)
    assert not ok
    assert gap == 0.0
    bound, _ = dc.eps0_bound(f, g, motion)
    assert bound == 0.0


def test_subdiff_convex():
    g = dc.PLConvex([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], [0, -1, -1, -1, -1])
    assert np.allclose(dc.subdiff_convex(g, [2.0, 0.0]).points, [[1, 0]])
    corner = dc.subdiff_convex(g, [2.0, 2.0]).points
    assert sorted(map(tuple, corner.tolist())) == [(0.0, 1.0), (1.0, 0.0)]
    assert np.allclose(dc.subdiff_convex(g, [0.0, 0.0]).points, [[0, 0]])


def test_clarke_sandwich_at_random_points():
    f = dc.aura_min(square_aura(-1, 1), square_aura(0.5, 2.5))
    rng = np.random.default_rng(9)
    # Random points plus some on the kinks
    X = np.vstack([rng.uniform(-2, 3, (40, 2)), [[1, 0], [0.5, 0.5], [1, 1], [2.5, 2.5], [1.5, 1.5]]])
    for x in X:
        exact = dc.clarke_exact(f, x)
        assert exact.subset_of(dc.clarke_superset(f, x)), x


def test_aura_sum_motion():
    f = square_aura()
    rng = np.random.default_rng(10)
    X = rng.uniform(-3, 3, (200, 2))
    double = dc.aura_sum_motion(f, f, gc.RigidMotion.identity(2))
    assert np.allclose(double(X), 2*f(X))
    g = gc.RigidMotion.planar(0.4, [1.0, 0.5])
    h = dc.aura_sum_motion(f, f, g)
    assert np.allclose(h(X), f(X) + dc.compose_motion(f, g)(X))
    # Zero exactly on A n gB
    A = gc.box([-1, -1], [1, 1])
    inside = A.contains(X, 0) & g.apply_polytope(A).contains(X, 0)
    assert inside.any()
    assert np.array_equal(h(X) <= 1e-12, inside)


def nor_sample(nor, n, rng):
    """ (base point, normal) pairs from every piece """
    for p in nor.pieces:
        x = p.base.vertices.mean(axis=0)
        for u in p.sample_normals(n, rng):
            yield x, u


def test_nor_eps_is_antitone():
    f = square_aura()
    K = f.certificate.window
    small = dc.nor_eps(f, 0.5, K)
    large = dc.nor_eps(f, 0.8, K)
    rng = np.random.default_rng(11)
    for x, u in nor_sample(large, 20, rng):
        assert small.contains([x], [u])
    assert dc.nor_eps_measure(large, rng=1) <= dc.nor_eps_measure(small, rng=1) + 1e-9


def test_nor_eps_follows_motions():
    f = square_aura()
    K = f.certificate.window
    g = gc.RigidMotion.planar(0.4, [0.3, -0.2])
    moved = dc.nor_eps(f, 0.5, K).moved(g)
    direct = dc.nor_eps(dc.compose_motion(f, g), 0.5, g.apply_polytope(K))
    assert len(direct) == len(moved)
    rng = np.random.default_rng(12)
    for x, u in nor_sample(moved, 10, rng):
        assert direct.contains([x], [u])
    for x, u in nor_sample(direct, 10, rng):
        assert moved.contains([x], [u])
    assert dc.nor_eps_measure(direct, rng=3) == pytest.approx(8 + 2*np.pi, abs=1e-6)


def test_antipodal_patches():
    corner = gc.HPolytope.from_vertices([[1, 1]])
    dirs = np.array([[np.cos(a), np.sin(a)] for a in np.radians([40, 50])])
    # The normal cones meet but the eps clipping of both patches keeps them apart
    p = dc.NorEpsPiece(corner, dc.ClarkeHull([[1, 0], [0, 1]]), 0.8)
    q = dc.NorEpsPiece(corner, dc.ClarkeHull(-dirs), 0.8)
    assert p.cone.meets(gc.Cone(dirs))
    assert not dc.antipodal_patches(p, q)
    p = dc.NorEpsPiece(corner, dc.ClarkeHull([[1, 0], [0, 1]]), 0.5)
    q = dc.NorEpsPiece(corner, dc.ClarkeHull(-dirs), 0.5)
    assert dc.antipodal_patches(p, q)


def test_transversality_disjoint():
    f = square_aura()
    ok, gap = dc.transversality_check(f, f, gc.RigidMotion.planar(0.0, [10.0, 0.0]), 0.5)
    assert ok
    assert np.isinf(gap)


def test_transversality_space():
    f = dc.aura_polytope(gc.box([-1, -1, -1], [1, 1, 1]))
    g = gc.RigidMotion.about_axis([1, 2, 3], 0.7, [1.1, 0.9, 0.8])
    ok, gap = dc.transversality_check(f, f, g, 0.3)
    logging.debug('gap {}'.format(gap))
    assert ok
    assert 0 < gap <= np.pi


def test_eps0_bound_identity():
    f = square_aura()
    bound, witness = dc.eps0_bound(f, f, gc.RigidMotion.identity(2))
    logging.debug('eps0 bound {} at {}'.format(bound, witness))
    # Both Clarke hulls are conv(e1, e2) on the diagonal ridges
    assert bound == pytest.approx(np.sqrt(2))
    assert abs(abs(witness[0]) - abs(witness[1])) < 1e-9
