"""
Curvature measures of polytopes and polyconvex sets.

The normal cycle of a polytope is the union of the pieces (relint F) x (normal cone of F),
so every Lipschitz-Killing curvature measure is a sum of face volumes weighted by external
angles. External angles are exact up to dimension 3 of the (pointed part of the) cone and
Monte-Carlo estimates above that.
"""
import zlib
import numpy as np
from scipy.optimize import linprog, nnls
from scipy.spatial import ConvexHull, QhullError
from scipy.special import gamma, comb

from kinemalab.misc import (TAU, N_MC_ANGLE, ToleranceAmbiguityError, AMBIGUITY_FACTOR, PreconditionError)
from kinemalab import geom_core as gc
from kinemalab import log
logger = log.get_logger(__name__)


def ball_volume(m):
    """ omega_m, volume of the unit ball of R^m """
    return np.pi**(m/2)/gamma(m/2 + 1)


def sphere_area(m):
    """ (m-1)-measure of the unit sphere of R^m (S^0 counts 2 points) """
    if m <= 0:
        return 0.0
    return m*ball_volume(m)


class ConeMeasure(object):
    """ Normalized Gaussian measure of a cone inside its linear span """

    def __init__(self, value, method='exact', stderr=0.0):
        self.value = float(value)
        self.method = method
        self.stderr = float(stderr)

    def __repr__(self):
        if self.method == 'exact':
            return 'ConeMeasure({:.6f})'.format(self.value)
        return 'ConeMeasure({:.6f} +- {:.1e}, MC)'.format(self.value, self.stderr)


def _pointed_part(cone):
    """ Generators of the cone modulo its lineality space, in coordinates of the quotient """
    S = cone.span
    G = cone.generators @ S.T
    lines = []
    for g in G:
        _, res = nnls(G.T, -g)
        if res <= 1e3*TAU:
            lines.append(g)
    if lines:
        _, s, vt = np.linalg.svd(np.array(lines))
        ell = int(np.sum(s > 10*TAU))
        # Complement of the lineality space inside the span
        Q = _complement(vt[:ell], len(S))
    else:
        Q = np.eye(len(S))
    if len(Q) == 0:
        return np.zeros((0, 0))
    R = G @ Q.T
    return R[np.linalg.norm(R, axis=1) > 10*TAU]


def _complement(B, m):
    """ Orthonormal basis of the orthogonal complement of the rows of B in R^m """
    if len(B) == 0:
        return np.eye(m)
    _, _, vt = np.linalg.svd(np.vstack([B, np.zeros((max(0, m - len(B)), m))]))
    return vt[len(B):]


def _interior_direction(G):
    """ c with c.g >= 1 for every generator of a pointed cone """
    n, p = G.shape
    res = linprog(np.zeros(p), A_ub=-G, b_ub=-np.ones(n), bounds=[(None, None)]*p, method='highs')
    if res.status != 0:
        raise ToleranceAmbiguityError('The cone is not pointed within tolerance')
    return res.x/np.linalg.norm(res.x)


def _planar_fraction(G):
    c = _interior_direction(G)
    ang = np.arctan2(c[0]*G[:, 1] - c[1]*G[:, 0], G @ c)
    return (ang.max() - ang.min())/(2*np.pi)


def _triangle_solid_angle(a, b, c):
    """ Solid angle of the spherical triangle with unit vertices a, b, c """
    num = abs(a @ np.cross(b, c))
    den = 1.0 + a @ b + b @ c + c @ a
    return 2*np.arctan2(num, den)


def _solid_fraction(G):
    c = _interior_direction(G)
    Y = G/(G @ c)[:, None]
    plane = _complement(c[None, :], 3)
    Q = Y @ plane.T
    try:
        order = ConvexHull(Q).vertices
    except QhullError:
        raise ToleranceAmbiguityError('Flat cone passed as a 3 dimensional one')
    R = Y[order]
    R /= np.linalg.norm(R, axis=1)[:, None]
    total = sum(_triangle_solid_angle(R[0], R[i], R[i + 1]) for i in range(1, len(R) - 1))
    return total/(4*np.pi)


def cone_measure(cone, n_mc=N_MC_ANGLE, rng=None):
    """ Fraction of the span of the cone covered by it (Gaussian measure).

        The lineality space is factored out first, so a halfspace measures 1/2 and a
        linear subspace measures 1. """
    if cone.is_zero:
        return ConeMeasure(1.0)
    R = _pointed_part(cone)
    p = R.shape[1] if R.size else 0
    if p == 0:
        return ConeMeasure(1.0)
    if p == 1:
        return ConeMeasure(0.5)
    if p == 2:
        return ConeMeasure(_planar_fraction(R))
    if p == 3:
        return ConeMeasure(_solid_fraction(R))
    rng = np.random.default_rng(rng)
    H = gc.Cone(R).halfspaces
    Z = rng.standard_normal((n_mc, p))
    inside = np.all(Z @ H.T <= 0, axis=1)
    f = inside.mean()
    return ConeMeasure(f, 'MC', np.sqrt(max(f*(1 - f), 1.0/n_mc)/n_mc))


def face_stream(seed, face):
    """ RNG for the Monte-Carlo angle of a face, independent of the evaluation order """
    return np.random.default_rng([seed or 0, zlib.crc32(repr(face.key).encode())])


class ExternalAngle(ConeMeasure):
    def __init__(self, face, measure):
        super().__init__(measure.value, measure.method, measure.stderr)
        self.face = face


def external_angle(P, F, n_mc=N_MC_ANGLE, seed=None):
    """ Normalized measure of the normal cone of F """
    return ExternalAngle(F, cone_measure(gc.normal_cone(P, F), n_mc, face_stream(seed, F)))


def internal_angle(P, F, n_mc=N_MC_ANGLE, seed=None):
    """ Normalized measure of the tangent cone of P at F (the cone of v - x_F) """
    V = P.vertices
    x = F.centroid
    gens = V - x
    cone = gc.Cone(gens, dim=P.dim)
    return cone_measure(cone, n_mc, face_stream(seed, F))


class CurvatureProfile(object):
    """ (Phi_0, ..., Phi_d) of a body, global (intrinsic volumes) or localized to a test set """

    def __init__(self, values, stderr=None, local=False):
        self.values = np.asarray(values, dtype=float)
        self.stderr = np.zeros_like(self.values) if stderr is None else np.asarray(stderr, dtype=float)
        self.local = local

    @property
    def dim(self):
        return len(self.values) - 1

    def __getitem__(self, k):
        return self.values[k]

    def __add__(self, other):
        return CurvatureProfile(self.values + other.values, np.hypot(self.stderr, other.stderr), self.local)

    def __mul__(self, s):
        return CurvatureProfile(self.values*s, self.stderr*abs(s), self.local)

    __rmul__ = __mul__

    def rows(self):
        """ CSV rows: k, value, stderr """
        return [(k, float(v), float(s)) for k, (v, s) in enumerate(zip(self.values, self.stderr))]

    def __repr__(self):
        return 'CurvatureProfile({})'.format(', '.join('{:.6g}'.format(v) for v in self.values))


def intrinsic_volumes(P, n_mc=N_MC_ANGLE, seed=None):
    """ V_k(P) = sum over k-faces of vol_k(F) times the external angle of F """
    d = P.dim
    vals = np.zeros(d + 1)
    var = np.zeros(d + 1)
    for F in P.face_lattice.faces:
        a = external_angle(P, F, n_mc, seed)
        vol = F.volume
        vals[F.dim] += vol*a.value
        var[F.dim] += (vol*a.stderr)**2
    return CurvatureProfile(vals, np.sqrt(var))


def _test_sets(E):
    """ Inclusion-exclusion terms for a test set given as a polytope or a list of them """
    if E is None:
        return [(1, None)]
    if isinstance(E, gc.HPolytope):
        return [(1, E)]
    return gc.nerve(gc.Polyconvex(list(E)), strict=False)


def curvature_measure(P, k, E=None, n_mc=N_MC_ANGLE, seed=None):
    """ Phi_k(P, E) = sum over k-faces of vol_k(F n E) times the external angle of F.
        E is a polytope (usually a box), a list of them (their union) or None (everywhere). """
    if k < 0 or k > P.dim:
        raise PreconditionError('k must be in [0, d]')
    if not P.nonempty():
        return 0.0
    total = 0.0
    for F in P.face_lattice.k_faces(k):
        vol = 0.0
        for sgn, T in _test_sets(E):
            if T is None:
                vol += F.volume
                continue
            inter = gc.intersect(F.as_polytope(), T, strict=False)
            if inter.nonempty():
                vol += sgn*gc.face_volume(inter.vertices, k)
        if vol != 0.0:
            total += vol*external_angle(P, F, n_mc, seed).value
    return total


def intrinsic_volumes_polyconvex(U, n_mc=N_MC_ANGLE, seed=None):
    """ Inclusion-exclusion over the nonempty intersections of the pieces """
    U = gc.Polyconvex.wrap(U)
    prof = CurvatureProfile(np.zeros(U.dim + 1))
    for sgn, piece in gc.nerve(U, strict=False):
        prof = prof + sgn*intrinsic_volumes(piece, n_mc, seed)
    return prof


def curvature_measure_polyconvex(U, k, E=None, n_mc=N_MC_ANGLE, seed=None):
    U = gc.Polyconvex.wrap(U)
    return sum(sgn*curvature_measure(piece, k, E, n_mc, seed) for sgn, piece in gc.nerve(U, strict=False))


def ball_intrinsic_volumes(d, r):
    """ V_k(B_r) = C(d, k) omega_d / omega_{d-k} r^k """
    if d < 1 or r <= 0:
        raise PreconditionError('Need d >= 1 and r > 0')
    k = np.arange(d + 1)
    vals = comb(d, k)*ball_volume(d)/ball_volume(d - k)*r**k
    return CurvatureProfile(vals)


def distance_to_polytope(P, X):
    """ Euclidean distance from each row of X to P, through the projections on the faces """
    X = np.atleast_2d(X)
    dist = np.where(P.contains(X), 0.0, np.inf)
    out = dist > 0
    if not np.any(out):
        return dist
    Y = X[out]
    best = np.full(len(Y), np.inf)
    for F in P.face_lattice.faces:
        o, B, _ = F.affine
        proj = o + ((Y - o) @ B.T) @ B if len(B) else np.repeat(o[None, :], len(Y), axis=0)
        ok = F.as_polytope().contains(proj, 1e-9)
        dd = np.linalg.norm(Y - proj, axis=1)
        best = np.where(ok, np.minimum(best, dd), best)
    dist[out] = best
    return dist


def steiner_volume(P, eps, n_mc=200000, seed=None, n_angle=N_MC_ANGLE):
    """ Volume of the parallel body P + eps B: Steiner formula and a Monte-Carlo estimate.
        Returns (formula, mc, stderr). """
    d = P.dim
    V = intrinsic_volumes(P, n_angle, seed)
    k = np.arange(d + 1)
    formula = float(np.sum(np.array([ball_volume(d - i) for i in k])*eps**(d - k)*V.values))
    rng = np.random.default_rng(seed)
    lo, hi = P.bounding_box()
    lo = lo - eps
    hi = hi + eps
    box_vol = float(np.prod(hi - lo))
    X = rng.uniform(lo, hi, size=(n_mc, d))
    p = float(np.mean(distance_to_polytope(P, X) <= eps))
    mc = box_vol*p
    stderr = box_vol*np.sqrt(max(p*(1 - p), 1.0/n_mc)/n_mc)
    logger.debug('Steiner eps={}: formula {:.6f}, MC {:.6f} +- {:.6f}'.format(eps, formula, mc, stderr))
    return formula, mc, stderr


# Planar fast path: convex polygons as counterclockwise vertex arrays

def convex_polygon(points):
    """ Counterclockwise hull vertices; segments come back as 2 points and points as 1 """
    P = gc.unique_points(points)
    if len(P) <= 1:
        return P
    o, B, _ = gc.affine_basis(P)
    if len(B) == 0:
        return P[:1]
    if len(B) == 1:
        t = (P - o) @ B[0]
        return P[[int(np.argmin(t)), int(np.argmax(t))]]
    return P[ConvexHull(P).vertices]


def clip_polygon(subject, clip):
    """ Sutherland-Hodgman clipping of a polygon by a counterclockwise convex polygon """
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        c1 = clip[i - 1]
        c2 = clip[i]
        e = c2 - c1
        inp = out
        out = []

        def side(p):
            return e[0]*(p[1] - c1[1]) - e[1]*(p[0] - c1[0])

        s = inp[-1]
        for q in inp:
            sq, ss = side(q), side(s)
            if sq >= 0:
                if ss < 0:
                    out.append(s + (q - s)*(ss/(ss - sq)))
                out.append(q)
            elif ss >= 0:
                out.append(s + (q - s)*(ss/(ss - sq)))
            s = q
    return np.array(out).reshape(-1, 2)


def clip_segment(a, b, E):
    """ Length of the part of [a, b] inside the polytope E """
    t0, t1 = 0.0, 1.0
    dv = b - a
    num = E.b - E.A @ a
    den = E.A @ dv
    for n_, d_ in zip(num, den):
        if abs(d_) <= 1e-15:
            if n_ < 0:
                return 0.0
        elif d_ > 0:
            t1 = min(t1, n_/d_)
        else:
            t0 = max(t0, n_/d_)
    return max(0.0, t1 - t0)*float(np.linalg.norm(dv))


def planar_measures(P, E=None):
    """ (Phi_0, Phi_1, Phi_2) of the convex polygon P (ccw vertices, or a segment, or a point)
        localized to the convex polygon E (None for the whole plane) """
    n = len(P)
    if n == 0:
        return np.zeros(3)
    inside = np.ones(n, dtype=bool) if E is None else E.contains(P)
    if n == 1:
        return np.array([float(inside[0]), 0.0, 0.0])
    if n == 2:
        length = float(np.linalg.norm(P[1] - P[0])) if E is None else clip_segment(P[0], P[1], E)
        return np.array([0.5*inside.sum(), length, 0.0])
    prev = P - np.roll(P, 1, axis=0)
    nxt = np.roll(P, -1, axis=0) - P
    turn = np.arctan2(prev[:, 0]*nxt[:, 1] - prev[:, 1]*nxt[:, 0], np.sum(prev*nxt, axis=1))
    phi0 = float(turn[inside].sum()/(2*np.pi))
    if E is None:
        phi1 = 0.5*float(np.linalg.norm(nxt, axis=1).sum())
        area = polygon_area(P)
    else:
        phi1 = 0.5*sum(clip_segment(P[i], P[(i + 1) % n], E) for i in range(n))
        area = polygon_area(clip_polygon(P, convex_polygon(E.vertices)))
    return np.array([phi0, phi1, area])


def polygon_area(P):
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5*abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def planar_intersection(P, Q, strict=True):
    """ P n Q for convex polygons, segments or points given as ccw vertex arrays """
    if len(Q) < 3 <= len(P):
        P, Q = Q, P
    if len(Q) < 3:
        inter = gc.intersect(gc.HPolytope.from_vertices(P), gc.HPolytope.from_vertices(Q), strict=False)
        return convex_polygon(inter.vertices) if inter.nonempty() else np.zeros((0, 2))
    if len(P) == 1:
        return P if _inside_ccw(P[0], Q) else np.zeros((0, 2))
    if len(P) == 2:
        return _segment_in_polygon(P, Q)
    C = clip_polygon(P, Q)
    if len(C) == 0:
        return C
    C = convex_polygon(C)
    if strict:
        # Touching polygons (lower dimensional overlap) only happen on a null set of motions
        extent = np.ptp(C, axis=0).max() if len(C) > 1 else 0.0
        area = polygon_area(C)
        if len(C) < 3 or area <= AMBIGUITY_FACTOR*gc.tolerance(extent):
            raise ToleranceAmbiguityError('Degenerate polygon contact')
    return C


def _inside_ccw(p, Q):
    e = np.roll(Q, -1, axis=0) - Q
    r = p - Q
    return bool(np.all(e[:, 0]*r[:, 1] - e[:, 1]*r[:, 0] >= -gc.tolerance()))


def _segment_in_polygon(S, Q):
    a, b = S
    e = np.roll(Q, -1, axis=0) - Q
    # Inward normals of a ccw polygon
    N = np.column_stack([-e[:, 1], e[:, 0]])
    t0, t1 = 0.0, 1.0
    dv = b - a
    num = np.sum(N*(a - Q), axis=1)
    den = N @ dv
    for n_, d_ in zip(num, den):
        # n_ + t d_ >= 0
        if abs(d_) <= 1e-15:
            if n_ < -gc.tolerance():
                return np.zeros((0, 2))
        elif d_ > 0:
            t0 = max(t0, -n_/d_)
        else:
            t1 = min(t1, -n_/d_)
    if t1 < t0:
        return np.zeros((0, 2))
    return convex_polygon(np.array([a + t0*dv, a + t1*dv]))
