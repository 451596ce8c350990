"""
Minkowski content and box dimension from point clouds, plus the generators of the sets
whose content is bounded: Sigma_{A,B}, T_K (and its slabs), nor_eps f and graph df.

Sets are products of polytopes and spherical patches embedded in R^D; distances are those
of the ambient R^D.
"""
import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress
from scipy.optimize import linprog

from kinemalab.misc import PreconditionError
from kinemalab import geom_core as gc
from kinemalab import curvature as cv
from kinemalab import dc_aura as dc
from kinemalab import parallel
from kinemalab import log
logger = log.get_logger(__name__)

# Candidate centers tried for each new ball of the greedy net
NET_CANDIDATES = 16
# Samples given to each lower dimensional piece
LOW_DIM_SAMPLES = 64
# Default scales
N_SCALES = 6


def covering_number(cloud, eps):
    """ (upper, lower) bounds for the covering number #(S, eps) of the sampled set.

        upper: greedy net, each ball re-centred among the uncovered points near the first
        uncovered one. lower: greedy 2 eps separated subset (no eps ball holds two of them). """
    X = _canonical(cloud)
    if len(X) == 0:
        raise PreconditionError('Empty point cloud')
    if eps <= 0:
        raise PreconditionError('eps must be positive')
    tree = cKDTree(X)
    return _net_size(X, tree, eps), _packing_size(X, tree, eps)


def _canonical(cloud):
    X = np.atleast_2d(np.asarray(cloud, dtype=float))
    # Rounded keys so coordinates equal up to noise sort as equal
    return X[np.lexsort(np.round(X, 9).T[::-1])]


def _net_size(X, tree, eps):
    uncovered = np.ones(len(X), dtype=bool)
    count = 0
    for i in range(len(X)):
        if not uncovered[i]:
            continue
        near = np.array(sorted(tree.query_ball_point(X[i], eps)))
        near = near[uncovered[near]]
        if len(near) > NET_CANDIDATES:
            near = near[np.unique(np.linspace(0, len(near) - 1, NET_CANDIDATES).astype(int))]
        best = None
        for c in near:
            ball = np.array(tree.query_ball_point(X[c], eps), dtype=int)
            gain = int(uncovered[ball].sum())
            if best is None or gain > best[0]:
                best = (gain, ball)
        uncovered[best[1]] = False
        count += 1
    return count


def _packing_size(X, tree, eps):
    free = np.ones(len(X), dtype=bool)
    count = 0
    for i in range(len(X)):
        if not free[i]:
            continue
        count += 1
        free[tree.query_ball_point(X[i], 2*eps*(1 - 1e-12))] = False
    return count


class ContentCurve(object):
    """ Covering/packing counts over a geometric grid of scales """

    def __init__(self, eps, upper, lower, ambient, metric='euclidean', spacing=None):
        self.eps = np.asarray(eps, dtype=float)
        self.upper = np.asarray(upper, dtype=int)
        self.lower = np.asarray(lower, dtype=int)
        self.ambient = ambient
        self.metric = metric
        self.spacing = spacing

    def __len__(self):
        return len(self.eps)

    def rows(self):
        return [(float(e), int(u), int(l)) for e, u, l in zip(self.eps, self.upper, self.lower)]

    def __repr__(self):
        return 'ContentCurve({})'.format(', '.join('{:.3g}:{}/{}'.format(*r) for r in self.rows()))


def eps_grid(cloud, n=N_SCALES, largest=None):
    """ Geometric grid with ratio 2 starting at diameter/8 """
    if largest is None:
        X = np.atleast_2d(cloud)
        largest = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))/8
    return largest/2.0**np.arange(n)


def _scale_counts(args):
    X, eps = args
    tree = cKDTree(X)
    return _net_size(X, tree, eps), _packing_size(X, tree, eps)


def content_curve(S, grid=None, n_sample=200000, seed=0, workers=1):
    """ Counts per scale for a PieceSet, a sampler callable (n, rng) -> points or a point array """
    if isinstance(S, PieceSet):
        X = S.sample(n_sample, np.random.default_rng(seed))
    elif callable(S):
        X = S(n_sample, np.random.default_rng(seed))
    else:
        X = np.atleast_2d(np.asarray(S, dtype=float))
    X = _canonical(X)
    if grid is None or np.isscalar(grid):
        grid = eps_grid(X, N_SCALES if grid is None else int(grid))
    else:
        grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    dist, _ = cKDTree(X).query(X, k=2)
    spacing = float(np.median(dist[:, 1])) if len(X) > 1 else 0.0
    if spacing > grid.min()/4:
        logger.warning('Undersampled set: median spacing {:.3g} above eps_min/4 = {:.3g}'.
                       format(spacing, grid.min()/4))
    with parallel.worker_pool(workers) as pmap:
        counts = pmap(_scale_counts, [(X, e) for e in grid])
    upper = [c[0] for c in counts]
    lower = [c[1] for c in counts]
    for e, u, l in zip(grid, upper, lower):
        if l > u:
            logger.warning('Packing bound {} above covering bound {} at eps={:.3g}'.format(l, u, e))
    if np.any(np.diff(upper) < 0):
        logger.warning('Covering counts not monotone in eps')
    return ContentCurve(grid, upper, lower, X.shape[1], spacing=spacing)


class ContentEstimate(object):
    """ Per scale content brackets of (2 eps)^(m-D) Vol(S_eps) and the log-log dimension fit.

        - `content_lo`, `content_hi`: bracket from the packing and covering counts
        - `measure`: #(S, eps) omega_m eps^m, comparable with the m-measure of the set
    """

    def __init__(self, curve, m, content_lo, content_hi, measure, dimension, dim_stderr, residual):
        self.curve = curve
        self.m = m
        self.content_lo = content_lo
        self.content_hi = content_hi
        self.measure = measure
        self.dimension = dimension
        self.dim_stderr = dim_stderr
        self.residual = residual

    @property
    def eps(self):
        return self.curve.eps

    def contains(self, value):
        """ Scales whose bracket holds value """
        return (self.content_lo <= value) & (value <= self.content_hi)

    def rows(self):
        """ eps, cover_upper, pack_lower, content_lo, content_hi """
        return [(float(e), int(u), int(l), float(a), float(b)) for e, u, l, a, b in
                zip(self.curve.eps, self.curve.upper, self.curve.lower, self.content_lo, self.content_hi)]

    def __repr__(self):
        return 'ContentEstimate(m={}, dimension={:.3f} +- {:.3f})'.format(self.m, self.dimension, self.dim_stderr)


def estimate_content(curve, m):
    D = curve.ambient
    eps = curve.eps
    wD = cv.ball_volume(D)
    lo = curve.lower*wD*eps**D*(2*eps)**(m - D)
    hi = curve.upper*wD*(2*eps)**D*(2*eps)**(m - D)
    measure = curve.upper*cv.ball_volume(m)*eps**m
    usable = curve.upper > 1
    if usable.sum() < 4:
        logger.warning('Only {} usable scales, the dimension fit is ill conditioned'.format(int(usable.sum())))
    if usable.sum() >= 2:
        fit = linregress(np.log(1/eps[usable]), np.log(curve.upper[usable]))
        dim, dim_err, residual = float(fit.slope), float(fit.stderr), float(1 - fit.rvalue**2)
    else:
        dim, dim_err, residual = 0.0, np.inf, 0.0
    est = ContentEstimate(curve, m, lo, hi, measure, dim, dim_err, residual)
    logger.debug(est)
    return est


# Samplers for the pieces

class PolytopeSampler(object):
    """ Uniform points of a (possibly lower dimensional) polytope """

    def __init__(self, P):
        self.P = P
        self.dim = P.dim_affine
        self.measure = gc.face_volume(P.vertices, self.dim)
        self.ambient = P.dim

    def sample(self, n, rng):
        return gc.sample_uniform(self.P, n, rng)


class SpherePatch(object):
    """ Cone n unit sphere, optionally cut by an extra membership test """

    def __init__(self, cone, accept=None, measure=None):
        self.cone = cone
        self.accept = accept
        self.dim = cone.span_dim - 1
        self.ambient = cone.dim
        self._measure = measure

    @property
    def measure(self):
        if self._measure is None:
            self._measure = cv.cone_measure(self.cone).value*cv.sphere_area(self.cone.span_dim)
        return self._measure

    def sample(self, n, rng):
        B = self.cone.span
        out = []
        got = 0
        while got < n:
            Z = rng.standard_normal((max(256, 4*n), len(B))) @ B
            Z /= np.linalg.norm(Z, axis=1)[:, None]
            ok = self.cone.contains(Z)
            if self.accept is not None:
                ok &= self.accept(Z)
            out.append(Z[ok])
            got += int(ok.sum())
        return np.vstack(out)[:n]


class ProductPiece(object):
    def __init__(self, first, second):
        self.first = first
        self.second = second
        self.dim = first.dim + second.dim
        self.ambient = first.ambient + second.ambient

    @property
    def measure(self):
        return self.first.measure*self.second.measure

    def sample(self, n, rng):
        return np.hstack([self.first.sample(n, rng), self.second.sample(n, rng)])


class MappedPiece(object):
    """ Image of a piece by a map on the sampled points (measure not tracked) """

    def __init__(self, piece, func, ambient):
        self.piece = piece
        self.func = func
        self.dim = piece.dim
        self.ambient = ambient
        self.measure = piece.measure

    def sample(self, n, rng):
        return self.func(self.piece.sample(n, rng))


class PieceSet(object):
    """ Finite union of product pieces with a sampler proportional to the top dimensional measure """

    def __init__(self, pieces, ambient, name=''):
        self.pieces = pieces
        self.ambient = ambient
        self.name = name

    def __len__(self):
        return len(self.pieces)

    @property
    def dim(self):
        return max((p.dim for p in self.pieces), default=-1)

    @property
    def measure(self):
        """ Measure of the top dimensional part """
        return float(sum(p.measure for p in self.pieces if p.dim == self.dim))

    def allocation(self, n):
        top = [p for p in self.pieces if p.dim == self.dim]
        w = np.array([p.measure for p in top], dtype=float)
        w = w/w.sum() if w.sum() > 0 else np.full(len(top), 1.0/len(top))
        counts = np.floor(w*n).astype(int)
        counts[:n - counts.sum()] += 1
        alloc = []
        it = iter(counts)
        for p in self.pieces:
            alloc.append(int(next(it)) if p.dim == self.dim else LOW_DIM_SAMPLES)
        return alloc

    def sample(self, n, rng):
        if not self.pieces:
            raise PreconditionError('Sampling an empty set')
        out = [p.sample(k, rng) for p, k in zip(self.pieces, self.allocation(n)) if k > 0]
        return np.vstack(out)

    def product(self, other):
        return PieceSet([ProductPiece(p, q) for p in self.pieces for q in other.pieces], self.ambient + other.ambient,
                        '{} x {}'.format(self.name, other.name))

    def __repr__(self):
        return 'PieceSet({}, {} pieces, dim={})'.format(self.name, len(self.pieces), self.dim)


def product_sampler(S, T):
    return S.product(T)


def sigma_set(A, B):
    """ Sigma_{A,B} = {(x - y, xi) : xi common outer normal of A at x and of B at y}.
        One piece (F - G) x (N(A,F) n N(B,G) n S) per pair of faces whose normal cones
        meet in their relative interiors. """
    if not (A.is_full_dim() and B.is_full_dim()):
        raise PreconditionError('Sigma needs full dimensional bodies')
    d = A.dim
    pieces = []
    for F in A.face_lattice.faces:
        if F.dim == d:
            continue
        NF = gc.normal_cone(A, F)
        for G in B.face_lattice.faces:
            if G.dim == d:
                continue
            NG = gc.normal_cone(B, G)
            if not NF.relint_meets(NG):
                continue
            C = NF.intersection(NG)
            if C.is_zero:
                continue
            base = gc.HPolytope.from_vertices((F.vertices[:, None, :] - G.vertices[None, :, :]).reshape(-1, d))
            pieces.append(ProductPiece(PolytopeSampler(base), SpherePatch(C)))
    logger.debug('Sigma with {} pieces'.format(len(pieces)))
    return PieceSet(pieces, 2*d, 'sigma')


def in_sigma(A, B, z, xi, tol=1e-7):
    """ Is (z, xi) in Sigma_{A,B}? Looks for x in the face of A exposed by xi and y in the one of
        B with x - y = z """
    xi = np.asarray(xi, dtype=float)
    d = A.dim
    hA = gc.support(A, xi)
    hB = gc.support(B, xi)
    A_ub = np.block([[A.A, np.zeros((len(A.b), d))], [np.zeros((len(B.b), d)), B.A]])
    b_ub = np.concatenate([A.b, B.b])
    A_eq = np.vstack([np.hstack([np.eye(d), -np.eye(d)]), np.concatenate([xi, np.zeros(d)]),
                      np.concatenate([np.zeros(d), xi])])
    b_eq = np.concatenate([z, [hA, hB]])
    res = linprog(np.zeros(2*d), A_ub=A_ub, b_ub=b_ub + tol, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)]*(2*d), method='highs')
    return res.status == 0


def _directions(F):
    """ Unit vectors of the linear space parallel to the face """
    B = F.affine[1]
    return SpherePatch(gc.Cone(np.vstack([B, -B]), dim=F.polytope.dim))


def tk_set(K):
    """ T_K for a polytope: (v, w) with v along a face of dimension 1..d-1 and w normal to it """
    if not K.is_full_dim() or K.dim < 2:
        raise PreconditionError('T_K needs a full dimensional body, d >= 2')
    d = K.dim
    pieces = []
    for F in K.face_lattice.faces:
        if 1 <= F.dim <= d - 1:
            pieces.append(ProductPiece(_directions(F), SpherePatch(gc.normal_cone(K, F))))
    return PieceSet(pieces, 2*d, 'tk')


def slab_map(P, XI, normal, height):
    """ (p, xi) -> (v, w): v the direction from the lower section point to the upper one
        (difference p inside the hyperplanes), w the normal rotated to be orthogonal to v """
    P = np.atleast_2d(P)
    XI = np.atleast_2d(XI)
    n = np.asarray(normal, dtype=float)
    n = n/np.linalg.norm(n)
    Z = height*n - P
    V = Z/np.linalg.norm(Z, axis=1)[:, None]
    W = XI - ((np.sum(XI*V, axis=1)/(V @ n))[:, None])*n
    W /= np.linalg.norm(W, axis=1)[:, None]
    return np.hstack([V, W])


def _section(K, n, h, Q):
    """ K n {x.n = h} in the coordinates Q of the hyperplane """
    S = gc.HPolytope(np.vstack([K.A, n, -n]), np.concatenate([K.b, [h, -h]]), bounded=True)
    if not S.nonempty():
        raise PreconditionError('The hyperplane x.n = {} misses the body'.format(h))
    P = gc.HPolytope.from_vertices(S.vertices @ Q.T)
    if not P.is_full_dim():
        raise PreconditionError('The hyperplane x.n = {} only touches the body'.format(h))
    return P


def tk_slab_set(K, normal, h0, h1):
    """ Image of Sigma of the sections K n H0 and K n H1 by slab_map: contains the part of T_K
        given by the segments of the boundary crossing both hyperplanes """
    if h1 <= h0:
        raise PreconditionError('Need h0 < h1')
    n = np.asarray(normal, dtype=float)
    n = n/np.linalg.norm(n)
    d = K.dim
    Q = cv._complement(n[None, :], d)
    A = _section(K, n, h0, Q)
    B = _section(K, n, h1, Q)
    sigma = sigma_set(A, B)

    def lift(X):
        return slab_map(X[:, :d - 1] @ Q, X[:, d - 1:] @ Q, n, h1 - h0)

    return PieceSet([MappedPiece(p, lift, 2*d) for p in sigma.pieces], 2*d, 'tk-slab')


class _NorPatch(object):
    def __init__(self, piece):
        self.piece = piece
        self.dim = piece.patch_dim
        self.ambient = piece.hull.dim
        self._measure = None

    @property
    def measure(self):
        if self._measure is None:
            self._measure = self.piece.patch_measure()
        return self._measure

    def sample(self, n, rng):
        return self.piece.sample_normals(n, rng)


def nor_eps_pieces(nor):
    return PieceSet([ProductPiece(PolytopeSampler(p.base), _NorPatch(p)) for p in nor.pieces], 2*nor.dim, 'nor_eps')


def nor_eps_content(f, eps, K, grid=None, n_sample=200000, seed=0):
    """ Content estimate of nor_eps f in R^d x S^(d-1) with m = d - 1 """
    nor = dc.nor_eps(f, eps, K)
    m = f.dim - 1
    if not nor.pieces:
        logger.info('nor_eps is empty for eps={}'.format(eps))
        grid = np.array([1.0]) if grid is None else np.asarray(grid, dtype=float)
        z = np.zeros(len(grid))
        curve = ContentCurve(grid, z, z, 2*f.dim)
        return ContentEstimate(curve, m, z, z, z, 0.0, 0.0, 0.0)
    return estimate_content(content_curve(nor_eps_pieces(nor), grid, n_sample, seed), m)


def graph_clarke_set(f, K):
    """ graph df over the window: cell x Clarke hull of the cell """
    pieces = []
    for cell in dc.refinement_cells(f, K):
        H = dc.clarke_exact(f, cell.witness)
        hull = H.polytope
        if cell.dim + hull.dim_affine > f.dim:
            logger.error('Clarke hull of dimension {} over a cell of dimension {}'.format(hull.dim_affine, cell.dim))
        pieces.append(ProductPiece(PolytopeSampler(cell.polytope), PolytopeSampler(hull)))
    return PieceSet(pieces, 2*f.dim, 'graph')


def clarke_graph_embedding(points, t):
    """ (x, u) -> (x, t u), maps nor_eps f x [0, eps] into graph df """
    points = np.atleast_2d(points)
    d = points.shape[1]//2
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(points),))
    return np.hstack([points[:, :d], points[:, d:]*t[:, None]])


def in_clarke_graph(f, X, tol=1e-7):
    """ Which (x, v) rows have v in the Clarke differential of f at x """
    X = np.atleast_2d(X)
    d = f.dim
    return np.array([dc.clarke_exact(f, x[:d]).contains(x[d:], tol) for x in X])
