"""Exact convex-polytope kernel.

Polytopes are kept in H-representation (unit normals, offsets) with lazily computed
vertices and face lattices. Lower dimensional polytopes are fine as long as they are
bounded: their implicit equalities show up as pairs of opposite halfspaces.

All the incidence decisions (is this vertex on that facet?) go through `incidences`,
which uses the incidence tolerance (TAU unless changed with `tau_scope`). Slacks that are
too close to it to be classified raise ToleranceAmbiguityError when the caller asks for
strict mode.
"""
import itertools
from contextlib import contextmanager
import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, Delaunay, QhullError

from kinemalab.misc import (TAU, AMBIGUITY_FACTOR, ToleranceAmbiguityError, DegeneratePolytopeError, UnboundedError,
                            EmptyPolytopeError, PreconditionError)
from kinemalab import log
logger = log.get_logger(__name__)

# Above this amount of d-subsets we ask qhull for the vertices
MAX_COMBOS = 200000


# Incidence tolerance in use, changed with set_tau/tau_scope
_tau = TAU


def current_tau():
    return _tau


def set_tau(tau):
    """ Sets the incidence tolerance and returns the previous one """
    global _tau
    if not tau > 0:
        raise PreconditionError('The incidence tolerance must be positive, not {}'.format(tau))
    old = _tau
    _tau = float(tau)
    return old


@contextmanager
def tau_scope(tau):
    """ Runs a block with another incidence tolerance """
    old = set_tau(tau)
    try:
        yield
    finally:
        set_tau(old)


def tolerance(scale=1.0):
    return _tau*max(1.0, scale)


def incidences(slacks, scale=1.0, strict=False, what='incidence'):
    """ The single comparator: which slacks are zero within the incidence tolerance.
        In strict mode slacks in the ambiguity band raise. """
    tol = tolerance(scale)
    mag = np.abs(slacks)
    tight = mag <= tol
    if strict:
        ambiguous = (mag > tol) & (mag <= AMBIGUITY_FACTOR*tol)
        if np.any(ambiguous):
            raise ToleranceAmbiguityError('Ambiguous {} (slack {:.3e}, tolerance {:.1e})'.
                                          format(what, float(mag[ambiguous].min()), tol))
    return tight


def sign(x, scale=1.0):
    tol = tolerance(scale)
    if x > tol:
        return 1
    if x < -tol:
        return -1
    return 0


def affine_basis(points, scale=1.0):
    """ Origin, orthonormal directions spanning the affine hull and the orthogonal complement """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    origin = points.mean(axis=0)
    d = points.shape[1]
    if len(points) == 1:
        return origin, np.zeros((0, d)), np.eye(d)
    _, s, vt = np.linalg.svd(points - origin)
    rank = int(np.sum(s > tolerance(scale)*10))
    return origin, vt[:rank], vt[rank:]


def unique_points(points, scale=1.0):
    """ Removes duplicated points (within 10*TAU), keeping the first occurrence """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tol = tolerance(scale)*10
    kept = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, points.shape[1])


def hull_halfspaces(points):
    """ H-representation of the convex hull of a point set of any affine dimension.
        Lower dimensional hulls get a pair of opposite halfspaces per missing direction. """
    points = unique_points(points, np.abs(points).max() if len(points) else 1.0)
    d = points.shape[1]
    origin, basis, comp = affine_basis(points, np.abs(points).max())
    rows = []
    for n in comp:
        rows.append(np.append(n, n @ origin))
        rows.append(np.append(-n, -(n @ origin)))
    r = len(basis)
    if r == 1:
        t = (points - origin) @ basis[0]
        rows.append(np.append(basis[0], t.max() + basis[0] @ origin))
        rows.append(np.append(-basis[0], -t.min() - basis[0] @ origin))
    elif r >= 2:
        local = (points - origin) @ basis.T
        try:
            hull = ConvexHull(local)
        except QhullError:
            hull = ConvexHull(local, qhull_options='QJ')
        for eq in hull.equations:
            n = eq[:-1] @ basis
            rows.append(np.append(n, -eq[-1] + n @ origin))
    if not rows:
        return np.zeros((0, d)), np.zeros(0)
    rows = np.array(rows)
    return rows[:, :d], rows[:, d]


def chebyshev(A, b, rmax=1e9):
    """ Center and radius of the largest ball inside {A x <= b}.
        A negative radius measures how infeasible the system is. """
    m, d = A.shape
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)]*d + [(None, rmax)], method='highs')
    if res.status != 0:
        logger.debug('Chebyshev LP status {}: {}'.format(res.status, res.message))
        return None, -np.inf
    return res.x[:d], res.x[-1]


def _canonical(A, b):
    """ Unit normals, no duplicated halfspaces, deterministic row order.
        Returns None when a zero row makes the system infeasible. """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    norms = np.linalg.norm(A, axis=1)
    zero = norms <= TAU
    if np.any(zero & (b < -TAU)):
        return None
    A = A[~zero]/norms[~zero, None]
    b = b[~zero]/norms[~zero]
    order = np.lexsort(np.vstack([b, A.T[::-1]]))
    A = A[order]
    b = b[order]
    keep_A = []
    keep_b = []
    for a, off in zip(A, b):
        for i, other in enumerate(keep_A):
            if np.linalg.norm(a - other) <= TAU:
                # Parallel halfspaces with the same orientation, the tighter one wins
                keep_b[i] = min(keep_b[i], off)
                break
        else:
            keep_A.append(a)
            keep_b.append(off)
    d = A.shape[1]
    return np.array(keep_A).reshape(-1, d), np.array(keep_b)


class HPolytope(object):
    """ Convex polyhedron {x : A x <= b} with unit normals.

        - `A`, `b`: canonical halfspaces
        - `bounded`: boundedness certificate (computed by LP when not provided)
        - `vertices`, `dim_affine`, `volume`, `face_lattice`: computed on first use
    """

    def __init__(self, A, b, bounded=None, vertices=None, strict=False, _canonical_rows=False):
        if _canonical_rows:
            self.A = A
            self.b = b
            self.is_empty = False
        else:
            canon = _canonical(A, b)
            self.is_empty = canon is None
            if canon is None:
                d = np.atleast_2d(A).shape[1]
                canon = (np.zeros((0, d)), np.zeros(0))
            self.A, self.b = canon
        self.dim = self.A.shape[1]
        self.scale = max(1.0, float(np.abs(self.b).max())) if len(self.b) else 1.0
        self.strict = strict
        self._bounded = bounded
        self._vertices = None if vertices is None else np.asarray(vertices, dtype=float)
        self._lattice = None
        self._affine = None
        if self._vertices is not None and len(self._vertices) == 0:
            self.is_empty = True

    # Construction helpers

    @classmethod
    def from_halfspaces(cls, rows, bounded=None):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return cls(rows[:, :-1], rows[:, -1], bounded=bounded)

    @classmethod
    def from_vertices(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if len(points) == 0:
            raise EmptyPolytopeError('No vertices given')
        A, b = hull_halfspaces(points)
        P = cls(A, b, bounded=True)
        P._vertices = _extreme(points, P)
        return P

    @classmethod
    def empty(cls, dim):
        P = cls(np.zeros((0, dim)), np.zeros(0), bounded=True)
        P.is_empty = True
        P._vertices = np.zeros((0, dim))
        return P

    # Lazy attributes

    @property
    def bounded(self):
        if self._bounded is None:
            self._bounded = self.is_empty or _is_bounded(self.A)
        return self._bounded

    @property
    def vertices(self):
        if self._vertices is None:
            if self.is_empty:
                self._vertices = np.zeros((0, self.dim))
            elif not self.bounded:
                raise UnboundedError('Vertices requested for an unbounded polyhedron')
            else:
                self._vertices = _enumerate_vertices(self.A, self.b, self.scale, self.strict)
                if len(self._vertices) == 0:
                    self.is_empty = True
        return self._vertices

    def nonempty(self):
        return not self.is_empty and len(self.vertices) > 0

    @property
    def affine(self):
        """ (origin, directions, complement) of the affine hull """
        if self._affine is None:
            self._affine = affine_basis(self.vertices, self.scale)
        return self._affine

    @property
    def dim_affine(self):
        if not self.nonempty():
            return -1
        return len(self.affine[1])

    def is_full_dim(self):
        return self.dim_affine == self.dim

    @property
    def volume(self):
        """ d-dimensional volume (0 for lower dimensional bodies) """
        if not self.nonempty() or not self.is_full_dim():
            return 0.0
        return face_volume(self.vertices, self.dim, self.scale)

    def contains(self, points, tol=None):
        points = np.atleast_2d(points)
        if self.is_empty:
            return np.zeros(len(points), dtype=bool)
        tol = tolerance(self.scale) if tol is None else tol
        return np.all(points @ self.A.T <= self.b + tol, axis=1)

    def bounding_box(self):
        V = self.vertices
        return V.min(axis=0), V.max(axis=0)

    def scaled(self, factor):
        """ factor*P, factor may be negative """
        if factor == 0:
            return HPolytope.from_vertices(np.zeros((1, self.dim)))
        s = np.sign(factor)
        P = HPolytope(self.A*s, self.b*abs(factor), bounded=self.bounded)
        if self._vertices is not None:
            P._vertices = self._vertices*factor
        return P

    def translated(self, t):
        t = np.asarray(t, dtype=float)
        P = HPolytope(self.A, self.b + self.A @ t, bounded=self.bounded, _canonical_rows=True)
        if self._vertices is not None:
            P._vertices = self._vertices + t
        return P

    def reduced(self):
        """ Drops the halfspaces that don't support a facet (implicit equalities are kept) """
        if not self.nonempty():
            return self
        V = self.vertices
        tight = incidences(self.b[:, None] - self.A @ V.T, self.scale)
        k = self.dim_affine
        keep = []
        for i in range(len(self.b)):
            ids = np.flatnonzero(tight[i])
            if len(ids) == len(V):
                keep.append(i)
            elif len(ids) and k >= 1 and _rank(V[ids], self.scale) == k - 1:
                keep.append(i)
        P = HPolytope(self.A[keep], self.b[keep], bounded=True, vertices=V, strict=self.strict,
                      _canonical_rows=True)
        return P

    @property
    def face_lattice(self):
        if self._lattice is None:
            self._lattice = FaceLattice(self)
        return self._lattice

    def to_dict(self):
        return {'dim': self.dim, 'halfspaces': [list(a) + [bb] for a, bb in zip(self.A.tolist(), self.b.tolist())]}

    def __repr__(self):
        if self.is_empty:
            return 'HPolytope(empty, dim={})'.format(self.dim)
        return 'HPolytope(dim={}, halfspaces={})'.format(self.dim, len(self.b))


def box(lo, hi):
    """ Axis parallel box [lo, hi] as a polytope """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(lo)
    if np.any(hi < lo):
        raise PreconditionError('Box with hi < lo')
    A = np.vstack([np.eye(d), -np.eye(d)])
    b = np.concatenate([hi, -lo])
    P = HPolytope(A, b, bounded=True)
    P._vertices = unique_points(np.array(list(itertools.product(*zip(lo, hi)))), P.scale)
    return P


def _rank(points, scale=1.0):
    if len(points) <= 1:
        return 0
    return len(affine_basis(points, scale)[1])


def _extreme(points, P):
    """ The points of the list that are vertices of P """
    points = unique_points(points, P.scale)
    if len(points) <= 2:
        return points
    tight = incidences(P.b[:, None] - P.A @ points.T, P.scale)
    # A point is a vertex iff the tight halfspaces pin it down within the affine hull
    origin, basis, comp = affine_basis(points, P.scale)
    k = len(basis)
    keep = []
    for j in range(len(points)):
        normals = np.vstack([P.A[tight[:, j]], comp])
        if k == 0 or (len(normals) and np.linalg.matrix_rank(normals, tol=1e-9) >= P.dim):
            keep.append(j)
    return points[keep]


def _is_bounded(A):
    """ Bounded iff the recession cone {y : A y <= 0} is {0} """
    d = A.shape[1]
    if len(A) <= d:
        return False
    for i in range(d):
        for s in (1.0, -1.0):
            c = np.zeros(d)
            c[i] = -s
            res = linprog(c, A_ub=A, b_ub=np.zeros(len(A)), bounds=[(-1, 1)]*d, method='highs')
            if res.status != 0 or -res.fun > TAU:
                return False
    return True


def _enumerate_vertices(A, b, scale, strict):
    """ Vertices of a bounded {A x <= b} by solving every d-subset of tight halfspaces """
    m, d = A.shape
    if m < d:
        return np.zeros((0, d))
    combos = np.array(list(itertools.combinations(range(m), d))) if m <= 60 or d <= 2 else None
    if combos is None or len(combos) > MAX_COMBOS:
        return _qhull_vertices(A, b, scale)
    M = A[combos]
    rhs = b[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    if not np.any(ok):
        return np.zeros((0, d))
    X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    slack = b[None, :] - X @ A.T
    tol = tolerance(scale)
    worst = slack.min(axis=1)
    if strict:
        near = (worst < -tol) & (worst >= -AMBIGUITY_FACTOR*tol)
        if np.any(near):
            raise ToleranceAmbiguityError('Ambiguous vertex (slack {:.3e})'.format(float(worst[near].min())))
    X = X[worst >= -tol]
    if len(X) == 0:
        return X
    X = unique_points(X, scale)
    order = np.lexsort(X.T[::-1])
    return X[order]


def _qhull_vertices(A, b, scale):
    from scipy.spatial import HalfspaceIntersection
    center, r = chebyshev(A, b)
    if center is None or r <= tolerance(scale):
        raise DegeneratePolytopeError('Too many halfspaces for a lower dimensional polytope')
    hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), center)
    X = unique_points(hs.intersections, scale)
    return X[np.lexsort(X.T[::-1])]


def face_volume(vertices, k, scale=1.0):
    """ k-dimensional volume of the hull of the vertices, measured in its affine hull """
    vertices = np.atleast_2d(vertices)
    if k == 0:
        return 1.0 if len(vertices) else 0.0
    origin, basis, _ = affine_basis(vertices, scale)
    if len(basis) < k:
        return 0.0
    local = (vertices - origin) @ basis[:k].T
    if k == 1:
        return float(local.max() - local.min())
    try:
        return float(ConvexHull(local).volume)
    except QhullError:
        return 0.0


class Face(object):
    """ A face of a polytope.

        - `dim`: affine dimension
        - `vertex_ids`: indices into the vertices of the polytope
        - `constraint_ids`: halfspaces tight on the whole face
    """

    def __init__(self, polytope, vertex_ids, constraint_ids, dim):
        self.polytope = polytope
        self.vertex_ids = tuple(sorted(vertex_ids))
        self.constraint_ids = tuple(sorted(constraint_ids))
        self.dim = dim
        self._affine = None

    @property
    def vertices(self):
        return self.polytope.vertices[list(self.vertex_ids)]

    @property
    def normals(self):
        return self.polytope.A[list(self.constraint_ids)]

    @property
    def affine(self):
        if self._affine is None:
            self._affine = affine_basis(self.vertices, self.polytope.scale)
        return self._affine

    @property
    def volume(self):
        return face_volume(self.vertices, self.dim, self.polytope.scale)

    @property
    def centroid(self):
        """ A relative interior point """
        return self.vertices.mean(axis=0)

    def as_polytope(self):
        P = self.polytope
        ids = list(self.constraint_ids)
        A = np.vstack([P.A, -P.A[ids]])
        b = np.concatenate([P.b, -P.b[ids]])
        return HPolytope(A, b, bounded=True, vertices=self.vertices)

    @property
    def key(self):
        return (self.dim, self.vertex_ids)

    def __repr__(self):
        return 'Face(dim={}, vertices={})'.format(self.dim, self.vertex_ids)


class FaceLattice(object):
    """ All the nonempty faces of a bounded polytope, the polytope itself included """

    def __init__(self, P):
        if not P.bounded:
            raise UnboundedError('Face lattice of an unbounded polyhedron')
        self.polytope = P
        V = P.vertices
        if len(V) == 0:
            raise EmptyPolytopeError('Face lattice of an empty polytope')
        slack = P.b[:, None] - P.A @ V.T
        self.tight = incidences(slack, P.scale, strict=P.strict, what='vertex/facet incidence').T
        self.faces = self._enumerate()
        self.by_dim = {}
        for f in self.faces:
            self.by_dim.setdefault(f.dim, []).append(f)
        self.dim = P.dim_affine

    def _closure(self, vset):
        cons = np.all(self.tight[list(vset)], axis=0)
        verts = np.flatnonzero(np.all(self.tight[:, cons], axis=1))
        return frozenset(verts.tolist()), tuple(np.flatnonzero(cons).tolist())

    def _enumerate(self):
        P = self.polytope
        n, m = self.tight.shape
        top = self._closure(range(n))
        seen = {top[0]: top[1]}
        queue = [top]
        while queue:
            vset, cons = queue.pop()
            for i in range(m):
                if i in cons:
                    continue
                sub = [v for v in vset if self.tight[v, i]]
                if not sub:
                    continue
                child = self._closure(sub)
                if child[0] not in seen:
                    seen[child[0]] = child[1]
                    queue.append(child)
        faces = []
        V = P.vertices
        for vset, cons in seen.items():
            ids = sorted(vset)
            faces.append(Face(P, ids, cons, _rank(V[ids], P.scale)))
        faces.sort(key=lambda f: f.key)
        return faces

    def k_faces(self, k):
        return self.by_dim.get(k, [])

    @property
    def f_vector(self):
        """ Number of proper faces of each dimension, from vertices to facets """
        return tuple(len(self.k_faces(k)) for k in range(self.dim))

    def subfaces(self, face):
        s = set(face.vertex_ids)
        return [f for f in self.faces if f is not face and set(f.vertex_ids) <= s]

    def superfaces(self, face):
        s = set(face.vertex_ids)
        return [f for f in self.faces if f is not face and s <= set(f.vertex_ids)]

    def locate(self, point):
        """ The smallest face containing the point (None if outside) """
        P = self.polytope
        if not P.contains(point)[0]:
            return None
        tight = incidences(P.b - P.A @ point, P.scale)
        vset, _ = self._closure(np.flatnonzero(np.all(self.tight[:, tight], axis=1)).tolist())
        for f in self.faces:
            if frozenset(f.vertex_ids) == vset:
                return f
        return None


def faces(K):
    """ Face lattice of a bounded polytope """
    return K.face_lattice


class Cone(object):
    """ Polyhedral cone generated by a list of vectors.

        Generators are stored normalized; an empty list is the zero cone.
    """

    def __init__(self, generators, dim=None):
        gens = np.atleast_2d(np.asarray(generators, dtype=float))
        if gens.size == 0:
            gens = np.zeros((0, dim if dim is not None else 0))
        norms = np.linalg.norm(gens, axis=1)
        gens = gens[norms > TAU]/norms[norms > TAU, None]
        self.dim = gens.shape[1] if dim is None else dim
        self.generators = unique_points(gens) if len(gens) else gens.reshape(0, self.dim)
        self._halfspaces = None
        self._span = None
        self._pointed = None

    @classmethod
    def from_halfspaces(cls, A):
        """ Cone {u : A u <= 0} (rows need not be unit) """
        A = np.atleast_2d(A)
        d = A.shape[1]
        P = HPolytope(np.vstack([A, np.eye(d), -np.eye(d)]),
                      np.concatenate([np.zeros(len(A)), np.ones(2*d)]), bounded=True)
        V = P.vertices
        gens = V[np.linalg.norm(V, axis=1) > TAU*10]
        return cls(gens, dim=d)

    @property
    def is_zero(self):
        return len(self.generators) == 0

    @property
    def span(self):
        """ Orthonormal basis of the linear span """
        if self._span is None:
            if self.is_zero:
                self._span = np.zeros((0, self.dim))
            else:
                _, s, vt = np.linalg.svd(self.generators)
                self._span = vt[:int(np.sum(s > TAU*10))]
        return self._span

    @property
    def span_dim(self):
        return len(self.span)

    @property
    def pointed(self):
        """ True when the cone contains no line """
        if self._pointed is None:
            if self.is_zero:
                self._pointed = True
            else:
                G = self.generators
                n = len(G)
                res = linprog(np.zeros(n), A_eq=np.vstack([G.T, np.ones((1, n))]),
                              b_eq=np.append(np.zeros(self.dim), 1.0), bounds=[(0, None)]*n, method='highs')
                self._pointed = res.status != 0
        return self._pointed

    @property
    def halfspaces(self):
        """ Rows n with n.u <= 0 describing the cone (equalities come in +/- pairs) """
        if self._halfspaces is None:
            if self.is_zero:
                self._halfspaces = np.vstack([np.eye(self.dim), -np.eye(self.dim)])
            else:
                A, b = hull_halfspaces(np.vstack([np.zeros(self.dim), self.generators]))
                through_origin = np.abs(b) <= TAU*10
                self._halfspaces = A[through_origin]
        return self._halfspaces

    def contains(self, U, tol=1e-9):
        U = np.atleast_2d(U)
        H = self.halfspaces
        if len(H) == 0:
            return np.ones(len(U), dtype=bool)
        return np.all(U @ H.T <= tol*np.maximum(1.0, np.linalg.norm(U, axis=1))[:, None], axis=1)

    def __add__(self, other):
        return Cone(np.vstack([self.generators, other.generators]), dim=self.dim)

    def intersection(self, other):
        return Cone.from_halfspaces(np.vstack([self.halfspaces, other.halfspaces]))

    def rotated(self, R):
        return Cone(self.generators @ R.T, dim=self.dim)

    def relint_meets(self, other):
        """ Do the relative interiors of both cones intersect? """
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        G1 = self.generators
        G2 = other.generators
        n1, n2 = len(G1), len(G2)
        A_eq = np.hstack([G1.T, -G2.T])
        res = linprog(np.zeros(n1 + n2), A_eq=A_eq, b_eq=np.zeros(self.dim),
                      bounds=[(1, None)]*(n1 + n2), method='highs')
        return res.status == 0

    def meets(self, other):
        """ Do both cones share a nonzero vector? """
        if self.is_zero or other.is_zero:
            return False
        G1 = self.generators
        G2 = other.generators
        n1, n2 = len(G1), len(G2)
        A_eq = np.vstack([np.hstack([G1.T, -G2.T]), np.append(np.ones(n1), np.zeros(n2))])
        b_eq = np.append(np.zeros(self.dim), 1.0)
        res = linprog(np.zeros(n1 + n2), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)]*(n1 + n2), method='highs')
        return res.status == 0

    def __repr__(self):
        return 'Cone(dim={}, generators={})'.format(self.dim, len(self.generators))


def _independent_subsets(G):
    """ (subset, orthonormal basis of its span) for the linearly independent subsets of rows """
    for size in range(1, min(len(G), G.shape[1]) + 1):
        for idx in itertools.combinations(range(len(G)), size):
            S = G[list(idx)]
            q, r = np.linalg.qr(S.T)
            if np.min(np.abs(np.diag(r))) > TAU*10:
                yield S, q


def _in_cone_of(S, u):
    """ Is u a nonnegative combination of the independent rows S? """
    coef, *_ = np.linalg.lstsq(S.T, u, rcond=None)
    return np.all(coef >= -TAU*10) and np.linalg.norm(S.T @ coef - u) <= TAU*1e3


def cone_angle(C, D):
    """ Smallest angle between nonzero vectors of C and D, 0 when they meet, inf for a zero cone.

        The closest pair lies in the relative interiors of cones spanned by independent generators,
        where it is the first pair of principal vectors of both spans. Ray pairs cover the obtuse case. """
    if C.is_zero or D.is_zero:
        return np.inf
    if C.meets(D):
        return 0.0
    best = float(np.max(C.generators @ D.generators.T))
    subsets_D = list(_independent_subsets(D.generators))
    for S, qs in _independent_subsets(C.generators):
        for T, qt in subsets_D:
            if len(S) == 1 and len(T) == 1:
                continue
            a, sv, bt = np.linalg.svd(qs.T @ qt)
            if sv[0] <= best:
                continue
            u = qs @ a[:, 0]
            v = qt @ bt[0]
            for su in (1.0, -1.0):
                if _in_cone_of(S, su*u) and _in_cone_of(T, su*v):
                    best = float(sv[0])
                    break
    return float(np.arccos(np.clip(best, -1.0, 1.0)))


def normal_cone(K, F):
    """ Cone generated by the normals of the facets containing F """
    return Cone(F.normals, dim=K.dim)


class RigidMotion(object):
    """ x -> R x + t with R in SO(d) """

    def __init__(self, rotation, translation):
        R = np.atleast_2d(np.asarray(rotation, dtype=float))
        t = np.asarray(translation, dtype=float).ravel()
        d = len(t)
        if R.shape != (d, d):
            raise PreconditionError('Rotation and translation sizes differ')
        if np.max(np.abs(R @ R.T - np.eye(d))) > 1e3*TAU or abs(np.linalg.det(R) - 1) > 1e3*TAU:
            raise PreconditionError('The rotation must be orthogonal with determinant +1')
        self.rotation = R
        self.translation = t
        self.dim = d

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def planar(cls, angle, translation=(0.0, 0.0)):
        c, s = np.cos(angle), np.sin(angle)
        return cls([[c, -s], [s, c]], translation)

    @classmethod
    def about_axis(cls, axis, angle, translation=(0.0, 0.0, 0.0)):
        """ Rodrigues rotation in 3D """
        k = np.asarray(axis, dtype=float)
        k = k/np.linalg.norm(k)
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + np.sin(angle)*K + (1 - np.cos(angle))*K @ K
        return cls(R, translation)

    def apply(self, points):
        return np.atleast_2d(points) @ self.rotation.T + self.translation

    def apply_polytope(self, P):
        if P.is_empty:
            return HPolytope.empty(P.dim)
        A = P.A @ self.rotation.T
        Q = HPolytope(A, P.b + A @ self.translation, bounded=P._bounded, strict=P.strict, _canonical_rows=True)
        if P._vertices is not None:
            Q._vertices = self.apply(P._vertices)
        return Q

    def inverse(self):
        Rt = self.rotation.T
        return RigidMotion(Rt, -Rt @ self.translation)

    def compose(self, other):
        """ self after other """
        return RigidMotion(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def to_dict(self):
        return {'rotation': self.rotation.tolist(), 'translation': self.translation.tolist()}

    def __repr__(self):
        return 'RigidMotion(R={}, t={})'.format(self.rotation.tolist(), self.translation.tolist())


class Polyconvex(object):
    """ Finite union of convex polytopes (the pieces may overlap) """

    def __init__(self, pieces):
        pieces = [p for p in pieces]
        if not pieces:
            raise PreconditionError('A polyconvex set needs at least one piece')
        for p in pieces:
            if not p.nonempty():
                raise EmptyPolytopeError('Empty piece in a polyconvex set')
        self.pieces = pieces
        self.dim = pieces[0].dim

    @classmethod
    def wrap(cls, body):
        return body if isinstance(body, Polyconvex) else cls([body])

    def moved(self, motion):
        return Polyconvex([motion.apply_polytope(p) for p in self.pieces])

    def to_dict(self):
        return {'dim': self.dim, 'pieces': [p.to_dict() for p in self.pieces]}


# Operations

def support(K, u):
    """ h_K(u) = max x.u over K """
    u = np.asarray(u, dtype=float)
    if K.is_empty:
        raise EmptyPolytopeError('Support function of an empty polytope')
    if K.bounded:
        return float(np.max(K.vertices @ u))
    res = linprog(-u, A_ub=K.A, b_ub=K.b, bounds=[(None, None)]*K.dim, method='highs')
    if res.status == 3:
        raise UnboundedError('The polyhedron is unbounded in direction {}'.format(u.tolist()))
    return float(-res.fun)


def cap(K, n, t):
    """ C(K, n, t) = {x in K : x.n >= h_K(n) - t} """
    if t <= 0:
        raise PreconditionError('Cap width must be positive')
    n = np.asarray(n, dtype=float)
    h = support(K, n)
    A = np.vstack([K.A, -n])
    b = np.append(K.b, t - h)
    return HPolytope(A, b, bounded=True).reduced()


def _directional_width(V, n):
    n = n/np.linalg.norm(n)
    p = V @ n
    return float(p.max() - p.min())


def width_bracket(K):
    """ (lower, upper) bracket of the width.
        The upper value is attained by an explicit direction; the lower one is twice the inradius. """
    if K.dim_affine < K.dim:
        raise DegeneratePolytopeError('Width of a lower dimensional polytope')
    V = K.vertices
    d = K.dim
    candidates = [a for a in K.A]
    if d == 3:
        # Edge-edge antipodal pairs complete the facet-vertex ones
        edges = [e.vertices[1] - e.vertices[0] for e in K.face_lattice.k_faces(1)]
        for e1, e2 in itertools.combinations(edges, 2):
            c = np.cross(e1, e2)
            if np.linalg.norm(c) > TAU:
                candidates.append(c)
    elif d > 3:
        candidates.extend(difference_body(K).A)
    widths = [_directional_width(V, c) for c in candidates]
    best = int(np.argmin(widths))
    upper = widths[best]
    if d > 3:
        res = minimize(lambda x: _directional_width(V, x), candidates[best], method='Nelder-Mead',
                       options={'xatol': 1e-10, 'fatol': 1e-12})
        upper = min(upper, float(res.fun))
    _, r = chebyshev(K.A, K.b)
    lower = upper if d <= 3 else min(upper, 2*r)
    return lower, upper


def width(K):
    """ inf over unit n of h_K(n) + h_K(-n).
        Exact for d <= 3, for d > 3 the certified upper end of the bracket. """
    return width_bracket(K)[1]


def minkowski_sum(K, L):
    V = (K.vertices[:, None, :] + L.vertices[None, :, :]).reshape(-1, K.dim)
    return HPolytope.from_vertices(V)


def difference_body(K):
    """ Delta K = K - K, always origin symmetric """
    return minkowski_sum(K, K.scaled(-1))


def intersect(K, L, strict=True):
    """ K and L intersected, EMPTY when they don't meet.
        In strict mode near-degenerate contacts raise ToleranceAmbiguityError. """
    if K.is_empty or L.is_empty:
        return HPolytope.empty(K.dim)
    A = np.vstack([K.A, L.A])
    b = np.concatenate([K.b, L.b])
    bounded = K.bounded or L.bounded or None
    P = HPolytope(A, b, bounded=bounded, strict=strict)
    if P.is_empty:
        return HPolytope.empty(K.dim)
    if not P.bounded:
        center, r = chebyshev(P.A, P.b, rmax=1.0)
        if r < -tolerance(P.scale):
            return HPolytope.empty(K.dim)
        return P
    if len(P.vertices) == 0:
        return HPolytope.empty(K.dim)
    if strict:
        # Touching bodies are fine, bodies almost touching aren't: every vertex is either on a
        # boundary of K or L or clearly away from it
        slacks = b[:, None] - A @ P.vertices.T
        incidences(slacks.ravel(), P.scale, strict=True, what='contact')
    return P.reduced()


def nerve(U, strict=True):
    """ Nonempty intersections of the pieces of a polyconvex set.
        Yields (sign, polytope) with sign = (-1)^(|I|+1) for the index set I. """
    pieces = U.pieces
    n = len(pieces)

    def extend(start, current, size):
        for i in range(start, n):
            inter = pieces[i] if current is None else intersect(current, pieces[i], strict)
            if not inter.nonempty():
                continue
            yield (1 if size % 2 == 0 else -1), inter
            for item in extend(i + 1, inter, size + 1):
                yield item

    return list(extend(0, None, 0))


def euler_polyconvex(U):
    """ Euler characteristic of the union by inclusion-exclusion over the nerve """
    return int(sum(s for s, _ in nerve(Polyconvex.wrap(U))))


class CoverResult(object):
    def __init__(self, centers, radius, volume):
        self.centers = centers
        self.radius = radius
        self.count = len(centers)
        d = centers.shape[1]
        # Empirical constant of "M r^d <= C_d Vol_d(K)"
        self.ratio = self.count*radius**d/volume

    def __repr__(self):
        return 'CoverResult(M={}, ratio={:.4f})'.format(self.count, self.ratio)


def cover_body(K, r):
    """ Covers K with balls of radius r: one ball when it's enough, otherwise the cubes of a grid
        (circumradius r) that meet K. """
    if r > width(K) + tolerance(K.scale):
        raise PreconditionError('Covering radius {} larger than the width'.format(r))
    V = K.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    center = (lo + hi)/2
    d = K.dim
    if np.max(np.linalg.norm(V - center, axis=1)) <= r:
        return CoverResult(center[None, :], r, K.volume)
    pitch = 2*r/np.sqrt(d)
    counts = np.maximum(1, np.ceil((hi - lo)/pitch - TAU).astype(int))
    centers = []
    for idx in itertools.product(*[range(c) for c in counts]):
        c_lo = lo + np.array(idx)*pitch
        cell = box(c_lo, c_lo + pitch)
        if intersect(cell, K, strict=False).nonempty():
            centers.append(c_lo + pitch/2)
    logger.debug('Covering with {} balls of radius {}'.format(len(centers), r))
    return CoverResult(np.array(centers), r, K.volume)


def cap_normals_diameter(K, nu, t, n_samples=20000, rng=None):
    """ Largest spherical distance to nu among the sampled outer normals of K + B over the cap
        C(K + B, nu, t). Returns (largest distance, 2*sqrt(3t), normals inside the cap). """
    rng = np.random.default_rng(rng)
    nu = np.asarray(nu, dtype=float)
    nu = nu/np.linalg.norm(nu)
    V = K.vertices
    U = rng.standard_normal((n_samples, K.dim))
    U /= np.linalg.norm(U, axis=1)[:, None]
    # A boundary point of K + B with normal u is p(u) + u, p(u) a support point of K
    P = V[np.argmax(U @ V.T, axis=1)]
    level = support(K, nu) + 1.0 - t
    inside = (P + U) @ nu >= level
    if not np.any(inside):
        return 0.0, 2*np.sqrt(3*t), 0
    angles = np.arccos(np.clip(U[inside] @ nu, -1, 1))
    return float(angles.max()), 2*np.sqrt(3*t), int(inside.sum())


def sample_uniform(P, n, rng):
    """ n points uniformly distributed in the (possibly lower dimensional) polytope """
    V = P.vertices if isinstance(P, HPolytope) else np.atleast_2d(P)
    origin, basis, _ = affine_basis(V)
    k = len(basis)
    if k == 0:
        return np.repeat(V[:1], n, axis=0)
    local = (V - origin) @ basis.T
    if k == 1:
        t = rng.uniform(local.min(), local.max(), n)
        return origin + t[:, None]*basis[0]
    tri = Delaunay(local)
    simplices = local[tri.simplices]
    vols = np.abs(np.linalg.det(simplices[:, 1:] - simplices[:, :1]))
    which = rng.choice(len(vols), size=n, p=vols/vols.sum())
    weights = rng.dirichlet(np.ones(k + 1), size=n)
    pts = np.einsum('ij,ijk->ik', weights, simplices[which])
    return origin + pts @ basis
