"""
Tests for the polytope kernel (kinemalab.geom_core)

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
from kinemalab.misc import (UnboundedError, ToleranceAmbiguityError, PreconditionError, TAU)


def unit_square():
    return gc.box([0, 0], [1, 1])


def random_hull(d, n, seed):
    rng = np.random.default_rng(seed)
    return gc.HPolytope.from_vertices(rng.standard_normal((n, d)))


def test_sign_and_tolerance():
    assert gc.sign(0.0) == 0
    assert gc.sign(TAU/2) == 0
    assert gc.sign(1e-3) == 1
    assert gc.sign(-1e-3) == -1
    # The band scales with the data
    assert gc.tolerance(1e6) > gc.tolerance(1.0)


def test_square_from_halfspaces():
    P = gc.HPolytope.from_halfspaces([[1, 0, 1], [-1, 0, 0], [0, 1, 1], [0, -1, 0]])
    assert P.bounded
    assert len(P.vertices) == 4
    assert P.volume == pytest.approx(1.0)
    assert P.is_full_dim()


def test_vertices_and_halfspaces_agree():
    P = random_hull(3, 12, 1)
    Q = gc.HPolytope.from_halfspaces(np.hstack([P.A, P.b[:, None]]))
    assert Q.volume == pytest.approx(P.volume, rel=1e-9)
    assert len(Q.vertices) == len(P.vertices)


def test_unbounded_vertices():
    P = gc.HPolytope.from_halfspaces([[-1, 0, 0], [0, -1, 0]])
    assert not P.bounded
    with pytest.raises(UnboundedError):
        P.vertices


def test_f_vectors():
    assert unit_square().face_lattice.f_vector == (4, 4)
    cube = gc.box([0, 0, 0], [1, 1, 1])
    assert cube.face_lattice.f_vector == (8, 12, 6)
    simplex = gc.HPolytope.from_vertices(np.vstack([np.zeros(3), np.eye(3)]))
    assert simplex.face_lattice.f_vector == (4, 6, 4)


def test_euler_relation_random():
    for seed in range(5):
        P = random_hull(3, 15, seed)
        f = P.face_lattice.f_vector
        logging.debug('f-vector {}'.format(f))
        assert f[0] - f[1] + f[2] == 2


def test_lower_dimensional_polytope():
    S = gc.HPolytope.from_vertices([[0, 0], [2, 0]])
    assert S.dim_affine == 1
    assert S.volume == 0.0
    assert gc.face_volume(S.vertices, 1) == pytest.approx(2.0)
    lat = S.face_lattice
    assert len(lat.k_faces(0)) == 2


def test_locate():
    lat = unit_square().face_lattice
    assert lat.locate(np.array([0.5, 0.5])).dim == 2
    assert lat.locate(np.array([1.0, 0.5])).dim == 1
    assert lat.locate(np.array([1.0, 1.0])).dim == 0
    assert lat.locate(np.array([2.0, 2.0])) is None


def test_sub_and_superfaces():
    lat = unit_square().face_lattice
    v = lat.k_faces(0)[0]
    sup = lat.superfaces(v)
    assert sorted(f.dim for f in sup) == [1, 1, 2]
    top = lat.k_faces(2)[0]
    assert len(lat.subfaces(top)) == 8


def test_normal_cones_tile_the_space():
    """ Sampled directions fall in exactly one normal cone (almost surely) """
    P = random_hull(2, 9, 3)
    rng = np.random.default_rng(0)
    U = rng.standard_normal((2000, 2))
    hits = np.zeros(len(U), dtype=int)
    for F in P.face_lattice.k_faces(0):
        hits += gc.normal_cone(P, F).contains(U, tol=-1e-12)
    assert np.all(hits == 1)


def test_cones():
    quarter = gc.Cone([[1, 0], [0, 1]])
    assert quarter.pointed
    assert quarter.span_dim == 2
    assert quarter.contains([[1, 1]])[0]
    assert not quarter.contains([[-1, 1]])[0]
    line = gc.Cone([[1, 0], [-1, 0]])
    assert not line.pointed
    assert line.span_dim == 1
    ray = gc.Cone([[1, 0]])
    assert ray.relint_meets(gc.Cone([[2, 0]]))
    assert not ray.relint_meets(quarter)
    inter = quarter.intersection(gc.Cone([[1, 0], [1, -1]]))
    assert len(inter.generators) == 1


def test_support_additivity():
    rng = np.random.default_rng(4)
    K = random_hull(2, 7, 5)
    L = random_hull(2, 6, 6)
    S = gc.minkowski_sum(K, L)
    for u in rng.standard_normal((20, 2)):
        assert gc.support(S, u) == pytest.approx(gc.support(K, u) + gc.support(L, u), abs=1e-9)


def test_cap():
    C = gc.cap(unit_square(), [1, 0], 0.25)
    assert C.volume == pytest.approx(0.25)
    with pytest.raises(PreconditionError):
        gc.cap(unit_square(), [1, 0], 0)


def test_cap_sum_identity():
    """ C(K + L, n, t) contains C(K, n, t/2) + C(L, n, t/2) """
    K = random_hull(2, 8, 7)
    L = random_hull(2, 8, 8)
    n = np.array([0.3, 0.9])
    t = 0.4
    big = gc.cap(gc.minkowski_sum(K, L), n, t)
    small = gc.minkowski_sum(gc.cap(K, n, t/2), gc.cap(L, n, t/2))
    assert np.all(big.contains(small.vertices, 1e-9))


def test_width():
    assert gc.width(unit_square()) == pytest.approx(1.0)
    assert gc.width(gc.box([0, 0, 0], [1, 2, 3])) == pytest.approx(1.0)
    lo, hi = gc.width_bracket(gc.box([0, 0, 0, 0], [1, 2, 2, 2]))
    assert lo <= 1.0 + 1e-9
    assert hi == pytest.approx(1.0)
    # Regular tetrahedron: the width is attained between opposite edges, not at a facet
    T = gc.HPolytope.from_vertices([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    assert gc.width(T) == pytest.approx(2.0)


def test_difference_body():
    D = gc.difference_body(unit_square())
    assert D.volume == pytest.approx(4.0)
    assert np.allclose(np.sort(D.vertices, axis=0), np.sort(-D.vertices, axis=0))


def test_intersect():
    A = unit_square()
    B = gc.box([0.5, 0.5], [2, 2])
    assert gc.intersect(A, B).volume == pytest.approx(0.25)
    C = gc.box([3, 3], [4, 4])
    assert not gc.intersect(A, C).nonempty()
    # Touching exactly is a valid (lower dimensional) contact
    D = gc.box([1, 0], [2, 1])
    assert gc.intersect(A, D, strict=False).dim_affine == 1


def test_intersect_ambiguous_contact():
    A = unit_square()
    B = gc.box([1 - 5e-8, 0.2], [2, 0.8])
    with pytest.raises(ToleranceAmbiguityError):
        gc.intersect(A, B, strict=True)


def test_rigid_motions():
    g = gc.RigidMotion.planar(0.3, [1, 2])
    h = g.inverse()
    x = np.array([[0.2, -0.7]])
    assert np.allclose(h.apply(g.apply(x)), x)
    assert np.allclose(g.compose(h).rotation, np.eye(2))
    r = gc.RigidMotion.about_axis([0, 0, 1], np.pi/2)
    assert np.allclose(r.apply(np.array([[1, 0, 0]])), [[0, 1, 0]])
    P = g.apply_polytope(unit_square())
    assert P.volume == pytest.approx(1.0)


def test_nerve_and_euler():
    A = unit_square()
    B = gc.box([0.5, 0.5], [1.5, 1.5])
    U = gc.Polyconvex([A, B])
    signs = sorted(s for s, _ in gc.nerve(U))
    assert signs == [-1, 1, 1]
    assert gc.euler_polyconvex(U) == 1
    far = gc.Polyconvex([A, gc.box([3, 3], [4, 4])])
    assert gc.euler_polyconvex(far) == 2


def test_euler_ring():
    w = 1.0
    rects = [((0, 0), (3*w, w)), ((0, 2*w), (3*w, 3*w)), ((0, 0), (w, 3*w)), ((2*w, 0), (3*w, 3*w))]
    ring = gc.Polyconvex([gc.box(lo, hi) for lo, hi in rects])
    assert gc.euler_polyconvex(ring) == 0


def test_cover_body():
    K = gc.box([0, 0], [4, 4])
    res = gc.cover_body(K, 1.0)
    logging.debug(res)
    assert res.count >= 16/np.pi
    # Every point of K is within r of some center
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 4, (500, 2))
    d = np.min(np.linalg.norm(X[:, None, :] - res.centers[None, :, :], axis=2), axis=1)
    assert np.all(d <= 1.0 + 1e-9)
    with pytest.raises(PreconditionError):
        gc.cover_body(gc.box([0, 0], [1, 1]), 2.0)


def test_cap_normals_diameter():
    K = gc.box([0, 0, 0], [1, 1, 1])
    for t in (0.05, 0.2):
        angle, bound, count = gc.cap_normals_diameter(K, [0, 0, 1], t, 20000, 1)
        logging.debug('t={} angle={} bound={} count={}'.format(t, angle, bound, count))
        assert count > 0
        assert angle <= bound


def test_sample_uniform():
    rng = np.random.default_rng(0)
    P = random_hull(2, 10, 11)
    X = gc.sample_uniform(P, 5000, rng)
    assert np.all(P.contains(X, 1e-9))
    S = gc.HPolytope.from_vertices([[0, 0, 0], [1, 1, 0]])
    Y = gc.sample_uniform(S, 100, rng)
    assert np.allclose(Y[:, 0], Y[:, 1])


def test_tau_scope():
    assert gc.sign(1e-7) == 1
    with gc.tau_scope(1e-6):
        assert gc.current_tau() == pytest.approx(1e-6)
        assert gc.sign(1e-7) == 0
    assert gc.current_tau() == TAU
    assert gc.sign(1e-7) == 1
    with pytest.raises(PreconditionError):
        gc.set_tau(0)
    assert gc.current_tau() == TAU


def test_intersect_ambiguous_inner_contact():
    """ A body almost reaching the boundary from inside """
    A = unit_square()
    B = gc.box([0.2, 0.2], [1 - 5e-8, 0.8])
    with pytest.raises(ToleranceAmbiguityError):
        gc.intersect(A, B, strict=True)
    # Exactly touching from inside is fine
    C = gc.intersect(A, gc.box([0.2, 0.2], [1, 0.8]), strict=True)
    assert C.volume == pytest.approx(0.48)


def test_cone_angle_simple():
    e1 = gc.Cone([[1, 0]])
    assert gc.cone_angle(e1, gc.Cone([[0, 1]])) == pytest.approx(np.pi/2)
    assert gc.cone_angle(e1, gc.Cone([[-1, 0]])) == pytest.approx(np.pi)
    # Obtuse: the closest vectors are extreme rays
    assert gc.cone_angle(e1, gc.Cone([[-1, 1], [-1, -1]])) == pytest.approx(3*np.pi/4)
    quarter = gc.Cone([[1, 0], [0, 1]])
    assert gc.cone_angle(quarter, gc.Cone([[1, 1]])) == 0.0
    assert np.isinf(gc.cone_angle(quarter, gc.Cone(np.zeros((0, 2)), dim=2)))


def test_cone_angle_between_face_interiors():
    """ Two 2-dimensional cones in R^4 whose closest vectors are interior to both """
    t = 0.3
    C = gc.Cone([[1, 0, -1, 0], [1, 0, 1, 0]])
    D = gc.Cone([[np.cos(t), np.sin(t), 0, -1], [np.cos(t), np.sin(t), 0, 1]])
    angle = gc.cone_angle(C, D)
    rays = np.arccos(np.max(C.generators @ D.generators.T))
    logging.debug('angle {} rays {}'.format(angle, rays))
    assert angle == pytest.approx(t)
    assert rays > t + 0.5


def boundary_directions(C, n=400):
    """ Unit vectors on the rays and the 2-faces of a cone in R^3 """
    G = C.generators
    s = np.linspace(0, 1, n)[:, None]
    pts = [G]
    for i in range(len(G)):
        for j in range(i + 1, len(G)):
            pts.append(s*G[i] + (1 - s)*G[j])
    P = np.vstack(pts)
    return P/np.linalg.norm(P, axis=1)[:, None]


def test_cone_angle_random_space():
    rng = np.random.default_rng(12)
    tilt = gc.RigidMotion.about_axis([1, 0, 0], 1.5).rotation
    for _ in range(10):
        C = gc.Cone(np.hstack([rng.uniform(-0.5, 0.5, (3, 2)), np.ones((3, 1))]))
        D = gc.Cone(np.hstack([rng.uniform(-0.5, 0.5, (3, 2)), np.ones((3, 1))]) @ tilt.T)
        angle = gc.cone_angle(C, D)
        dots = boundary_directions(C) @ boundary_directions(D).T
        sampled = np.arccos(min(1.0, dots.max()))
        logging.debug('angle {} sampled {}'.format(angle, sampled))
        assert angle > 0
        assert angle <= sampled + 1e-9
        assert angle == pytest.approx(sampled, abs=1e-4)
