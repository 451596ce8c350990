"""
Piecewise-linear DC functions f = g - h (g, h maxima of affine pieces).

Everything here is exact up to the incidence tolerance: the common refinement of the
linearity regions of g and h is a finite polyhedral complex, on each relatively open cell
the active pieces don't change, so Clarke differentials, weak regularity and nor_eps f
are computed cell by cell at a witness point.
"""
import itertools
import numpy as np

from kinemalab.misc import (TAU, DegeneratePolytopeError, CertificationMissingError, PreconditionError)
from kinemalab import geom_core as gc
from kinemalab.curvature import cone_measure, sphere_area
from kinemalab import log
logger = log.get_logger(__name__)

# Rounding used to recognize the same face coming from different cells
KEY_DECIMALS = 8


class PLConvex(object):
    """ g(x) = max_i (a_i.x + b_i), with the pieces that are never active removed """

    def __init__(self, gradients, offsets, prune=True):
        G = np.atleast_2d(np.asarray(gradients, dtype=float))
        c = np.asarray(offsets, dtype=float).ravel()
        if len(c) == 0 or len(G) != len(c):
            raise PreconditionError('A max-affine function needs at least one piece')
        self.dim = G.shape[1]
        if prune:
            G, c = _prune(G, c)
        self.gradients = G
        self.offsets = c

    @classmethod
    def zero(cls, d):
        return cls(np.zeros((1, d)), np.zeros(1), prune=False)

    @classmethod
    def affine(cls, a, b=0.0):
        return cls(np.atleast_2d(a), [b], prune=False)

    def __len__(self):
        return len(self.offsets)

    def pieces(self, x):
        """ Values of every affine piece, one column per piece """
        return np.atleast_2d(x) @ self.gradients.T + self.offsets

    def __call__(self, x):
        v = self.pieces(x).max(axis=1)
        return v if np.ndim(x) > 1 else float(v[0])

    def active(self, x, scale=1.0):
        v = self.pieces(x)[0]
        return np.flatnonzero(gc.incidences(v.max() - v, scale))

    def region(self, i):
        """ Linearity region of piece i as halfspace rows (A, b) """
        A = self.gradients - self.gradients[i]
        b = self.offsets[i] - self.offsets
        return A, b

    def __add__(self, other):
        G = (self.gradients[:, None, :] + other.gradients[None, :, :]).reshape(-1, self.dim)
        c = (self.offsets[:, None] + other.offsets[None, :]).ravel()
        return PLConvex(G, c)

    def maximum(self, other):
        return PLConvex(np.vstack([self.gradients, other.gradients]), np.concatenate([self.offsets, other.offsets]))

    def shifted(self, value):
        return PLConvex(self.gradients, self.offsets + value, prune=False)

    def moved(self, motion):
        """ g o motion^-1 """
        G = self.gradients @ motion.rotation.T
        return PLConvex(G, self.offsets - G @ motion.translation, prune=False)

    def to_list(self):
        return np.hstack([self.gradients, self.offsets[:, None]]).tolist()


def _prune(G, c):
    """ Keeps one copy of each piece whose region is full dimensional """
    order = np.lexsort(np.vstack([c, G.T[::-1]]))
    G, c = G[order], c[order]
    keep = []
    for i in range(len(c)):
        if any(np.max(np.abs(G[i] - G[j])) <= TAU and abs(c[i] - c[j]) <= TAU for j in keep):
            continue
        A = G - G[i]
        b = c[i] - c
        rows = np.ones(len(c), dtype=bool)
        rows[i] = False
        if not np.any(rows):
            keep.append(i)
            continue
        _, r = gc.chebyshev(A[rows], b[rows])
        if r > gc.tolerance():
            keep.append(i)
    if not keep:
        keep = [0]
    return G[keep], c[keep]


class DCFunction(object):
    """ f = g - h, optionally carrying the certificate of weak regularity at 0 """

    def __init__(self, g, h=None, certificate=None):
        self.g = g
        self.h = h if h is not None else PLConvex.zero(g.dim)
        if self.h.dim != g.dim:
            raise PreconditionError('g and h live in different dimensions')
        self.dim = g.dim
        self.certificate = certificate

    def __call__(self, x):
        return self.g(x) - self.h(x)

    def to_dict(self):
        return {'g': self.g.to_list(), 'h': self.h.to_list()}

    def __repr__(self):
        return 'DCFunction(dim={}, g={} pieces, h={} pieces)'.format(self.dim, len(self.g), len(self.h))


def evaluate(f, x):
    return f(x)


class ClarkeHull(object):
    """ Convex hull of finitely many gradient vectors """

    def __init__(self, points):
        self.points = gc.unique_points(points)
        self.dim = self.points.shape[1]
        self._polytope = None

    @property
    def polytope(self):
        if self._polytope is None:
            self._polytope = gc.HPolytope.from_vertices(self.points)
        return self._polytope

    @property
    def max_norm(self):
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def contains(self, v, tol=1e-7):
        return bool(self.polytope.contains(np.atleast_2d(v), tol)[0])

    def subset_of(self, other, tol=1e-7):
        return bool(np.all(other.polytope.contains(self.points, tol)))

    def __add__(self, other):
        return ClarkeHull((self.points[:, None, :] + other.points[None, :, :]).reshape(-1, self.dim))

    def rotated(self, R):
        return ClarkeHull(self.points @ R.T)

    def __repr__(self):
        return 'ClarkeHull({})'.format(self.points.tolist())


def subdiff_convex(g, x):
    """ conv of the gradients of the pieces active at x """
    x = np.asarray(x, dtype=float)
    return ClarkeHull(g.gradients[g.active(x, np.abs(x).max())])


def clarke_superset(f, x):
    """ dg(x) - dh(x), always contains the Clarke differential of f """
    dg = subdiff_convex(f.g, x).points
    dh = subdiff_convex(f.h, x).points
    return ClarkeHull((dg[:, None, :] - dh[None, :, :]).reshape(-1, f.dim))


def local_pairs(f, x):
    """ Pairs (i, j) of pieces of g and h whose common region is full dimensional near x """
    x = np.asarray(x, dtype=float)
    scale = np.abs(x).max()
    Ig = f.g.active(x, scale)
    Ih = f.h.active(x, scale)
    d = f.dim
    box_A = np.vstack([np.eye(d), -np.eye(d)])
    box_b = np.ones(2*d)
    pairs = []
    for i in Ig:
        for j in Ih:
            # Tangent cone of the region at x, cut by the unit box
            A = np.vstack([f.g.gradients[Ig] - f.g.gradients[i], f.h.gradients[Ih] - f.h.gradients[j], box_A])
            b = np.concatenate([np.zeros(len(Ig) + len(Ih)), box_b])
            keep = np.linalg.norm(A, axis=1) > TAU
            _, r = gc.chebyshev(A[keep], b[keep])
            gc.incidences(np.array([r]), 1.0, strict=True, what='region feasibility')
            if r > gc.tolerance():
                pairs.append((i, j))
    return pairs


def clarke_exact(f, x):
    """ Clarke differential: hull of a_i - c_j over the regions that touch x with full dimension """
    pairs = local_pairs(f, x)
    if not pairs:
        # Can't happen for a valid point, the regions cover the space
        logger.warning('No full dimensional region at {}, using the superset'.format(np.asarray(x).tolist()))
        return clarke_superset(f, x)
    pts = [f.g.gradients[i] - f.h.gradients[j] for i, j in pairs]
    return ClarkeHull(pts)


def min_norm_point(P, tol=1e-12, max_iter=500):
    """ Wolfe's algorithm for the minimum norm point of conv(P) """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    scale = max(1.0, float(np.max(np.sum(P*P, axis=1))))
    S = [int(np.argmin(np.sum(P*P, axis=1)))]
    lam = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(max_iter):
        j = int(np.argmin(P @ x))
        if x @ x - x @ P[j] <= tol*scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            Q = P[S]
            k = len(S)
            M = np.zeros((k + 1, k + 1))
            M[:k, :k] = Q @ Q.T
            M[:k, k] = 1.0
            M[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            mu = np.linalg.lstsq(M, rhs, rcond=None)[0][:k]
            if np.all(mu > tol):
                lam = mu
                break
            neg = mu <= tol
            theta = np.min(lam[neg]/(lam[neg] - mu[neg] + 1e-300))
            theta = min(1.0, max(0.0, theta))
            lam = (1 - theta)*lam + theta*mu
            drop = lam <= tol
            if np.all(drop):
                drop[np.argmax(lam)] = False
            S = [s for s, dr in zip(S, drop) if not dr]
            lam = lam[~drop]
            lam /= lam.sum()
        x = lam @ P[S]
    return x


def min_norm_clarke(H):
    """ (minimum norm point of the hull, its norm) """
    x = min_norm_point(H.points)
    # Optimality: no point of the hull is below the supporting plane at x
    gap = float(np.min(H.points @ x) - x @ x)
    if gap < -1e-8*max(1.0, H.max_norm**2):
        logger.warning('Minimum norm point not optimal (gap {:.3e})'.format(gap))
    return x, float(np.linalg.norm(x))


class RefinementCell(object):
    """ Relatively open cell of the common refinement of g and h inside a window """

    def __init__(self, polytope, vertices, dim, values):
        self.polytope = polytope
        self.vertices = vertices
        self.dim = dim
        self.values = values
        self.witness = vertices.mean(axis=0)

    @property
    def fmin(self):
        return float(self.values.min())

    @property
    def fmax(self):
        return float(self.values.max())

    @property
    def key(self):
        return (self.dim, tuple(sorted(map(tuple, np.round(self.vertices, KEY_DECIMALS)))))

    @property
    def volume(self):
        return gc.face_volume(self.vertices, self.dim)

    def __repr__(self):
        return 'RefinementCell(dim={}, witness={})'.format(self.dim, self.witness.tolist())


def refinement_cells(f, window):
    """ All the faces of the full dimensional cells P(i, j) = {g = piece i, h = piece j} in the window """
    cells = {}
    for i in range(len(f.g)):
        Ag, bg = f.g.region(i)
        for j in range(len(f.h)):
            Ah, bh = f.h.region(j)
            A = np.vstack([Ag, Ah, window.A])
            b = np.concatenate([bg, bh, window.b])
            keep = np.linalg.norm(A, axis=1) > TAU
            if np.any((~keep) & (b < -TAU)):
                continue
            P = gc.HPolytope(A[keep], b[keep], bounded=True)
            if not P.nonempty() or not P.is_full_dim():
                continue
            lat = P.face_lattice
            V = P.vertices
            vals = f(V)
            for face in lat.faces:
                cell = RefinementCell(face.as_polytope(), face.vertices, face.dim, vals[list(face.vertex_ids)])
                cells.setdefault(cell.key, cell)
    result = [cells[k] for k in sorted(cells)]
    logger.debug('Refinement complex with {} cells'.format(len(result)))
    return result


class RegularityCertificate(object):
    """ Weak regularity of the value c over a window and band height delta.

        - `eps0`: lower bound for the Clarke norms in the band (inf when the band is empty)
        - `witness`: (cell, point, Clarke element) when eps0 <= TAU
    """

    def __init__(self, value, window, delta, eps0, witness=None, band_cells=0):
        self.value = value
        self.window = window
        self.delta = delta
        self.eps0 = eps0
        self.witness = witness
        self.band_cells = band_cells

    @property
    def vacuous(self):
        return self.band_cells == 0

    @property
    def regular(self):
        return self.eps0 > gc.tolerance()

    def covers(self, window):
        return bool(np.all(self.window.contains(window.vertices, 1e-9)))

    def to_dict(self):
        lo, hi = self.window.bounding_box()
        res = {'value': self.value, 'window': {'lo': lo.tolist(), 'hi': hi.tolist()}, 'delta': self.delta,
               'eps0': self.eps0 if np.isfinite(self.eps0) else None, 'band_cells': self.band_cells}
        if self.witness is not None:
            res['witness'] = {'point': self.witness[1].tolist(), 'clarke': self.witness[2].tolist()}
        return res

    def __repr__(self):
        return 'RegularityCertificate(c={}, eps0={}, band_cells={})'.format(self.value, self.eps0, self.band_cells)


def _in_band(cell, c, delta, tol):
    if cell.fmax - cell.fmin <= tol:
        return c + tol < cell.fmax <= c + delta + tol
    return cell.fmax > c + tol and cell.fmin < c + delta - tol


def weak_regularity(f, c, K, delta):
    """ Smallest Clarke norm over the cells meeting {c < f <= c + delta} inside K """
    if delta <= 0:
        raise PreconditionError('The band height must be positive')
    if not K.bounded:
        raise PreconditionError('The window must be bounded')
    tol = gc.tolerance(abs(c))
    eps0 = np.inf
    witness = None
    band = 0
    for cell in refinement_cells(f, K):
        if not _in_band(cell, c, delta, tol):
            continue
        band += 1
        v, n = min_norm_clarke(clarke_exact(f, cell.witness))
        if n < eps0:
            eps0 = n
            witness = (cell, cell.witness, v)
    if band == 0:
        logger.info('Empty band {} < f <= {}, the certificate is vacuous'.format(c, c + delta))
        return RegularityCertificate(c, K, delta, np.inf)
    cert = RegularityCertificate(c, K, delta, eps0, witness if eps0 <= tol else None, band)
    if not cert.regular:
        logger.warning('{} is not a weakly regular value, near zero Clarke element at {}'.
                       format(c, witness[1].tolist()))
    logger.debug(cert)
    return cert


def certify(f, K, delta=1.0):
    """ Certifies 0 as weakly regular on K and stores the certificate in f """
    cert = weak_regularity(f, 0.0, K, delta)
    if not cert.regular:
        raise CertificationMissingError('0 is not a weakly regular value of {} on the window'.format(f))
    f.certificate = cert
    return f


def aura_polytope(P):
    """ max(0, max_i (a_i.x - b_i)), certified on the bounding box of P grown by 1 """
    if not P.is_full_dim():
        raise DegeneratePolytopeError('Aura of a lower dimensional polytope')
    g = PLConvex(np.vstack([np.zeros(P.dim), P.A]), np.concatenate([[0.0], -P.b]), prune=False)
    f = DCFunction(g)
    lo, hi = P.bounding_box()
    return certify(f, gc.box(lo - 1, hi + 1))


def aura_from_sublevel(f, c=0.0):
    """ (f - c) v 0 = max(g - c, h) - h, an aura candidate for {f <= c} """
    return DCFunction(f.g.shifted(-c).maximum(f.h), f.h)


def aura_min(f1, f2):
    """ min(f1, f2) = (g1 + g2) - max(g1 + h2, g2 + h1) """
    return DCFunction(f1.g + f2.g, (f1.g + f2.h).maximum(f2.g + f1.h))


def compose_motion(f, motion):
    """ f o motion^-1 """
    return DCFunction(f.g.moved(motion), f.h.moved(motion))


def aura_sum_motion(f, g, motion):
    """ f + g o motion^-1 """
    gm = compose_motion(g, motion)
    return DCFunction(f.g + gm.g, f.h + gm.h)


def _radial(H, U):
    """ Largest t with t*u in the hull (0 inside the hull assumed), for each row u """
    P = H.polytope
    proj = U @ P.A.T
    with np.errstate(divide='ignore', invalid='ignore'):
        t = np.where(proj > 1e-12, P.b/proj, np.inf)
    return t.min(axis=1)


class NorEpsPiece(object):
    """ base x patch, patch = {u : t*u in the Clarke hull for some t >= eps} """

    def __init__(self, base, hull, eps):
        self.base = base
        self.hull = hull
        self.eps = eps
        self.cone = gc.Cone(hull.points, dim=hull.dim)
        P = hull.polytope
        far = P.b > gc.tolerance()
        # Facets away from 0 closer than eps remove part of the cone
        self.clipped = bool(np.any(P.b[far] < eps))
        self.base_dim = base.dim_affine
        self.patch_dim = self.cone.span_dim - 1

    @property
    def dim(self):
        return self.base_dim + self.patch_dim

    def contains_normals(self, U):
        U = np.atleast_2d(U)
        return (_radial(self.hull, U) >= self.eps - 1e-12) & self.cone.contains(U)

    def sample_normals(self, n, rng):
        """ n unit vectors uniformly distributed in the patch (rejection in the span) """
        B = self.cone.span
        out = []
        got = 0
        while got < n:
            Z = rng.standard_normal((max(64, 2*n), len(B))) @ B
            Z /= np.linalg.norm(Z, axis=1)[:, None]
            Z = Z[self.contains_normals(Z)]
            out.append(Z)
            got += len(Z)
        return np.vstack(out)[:n]

    def patch_measure(self, n_mc=200000, rng=None):
        """ Spherical measure of the patch inside the unit sphere of its span """
        m = self.cone.span_dim
        if not self.clipped:
            frac = cone_measure(self.cone, n_mc=n_mc, rng=rng).value
        else:
            rng = np.random.default_rng(rng)
            B = self.cone.span
            Z = rng.standard_normal((n_mc, m)) @ B
            Z /= np.linalg.norm(Z, axis=1)[:, None]
            frac = float(np.mean(self.contains_normals(Z)))
        return frac*sphere_area(m)

    def moved(self, motion):
        return NorEpsPiece(motion.apply_polytope(self.base), self.hull.rotated(motion.rotation), self.eps)

    def __repr__(self):
        return 'NorEpsPiece(base dim={}, patch dim={}, clipped={})'.format(self.base_dim, self.patch_dim, self.clipped)


class NorEpsSet(object):
    def __init__(self, pieces, eps, dim):
        self.pieces = pieces
        self.eps = eps
        self.dim = dim

    def __len__(self):
        return len(self.pieces)

    def moved(self, motion):
        return NorEpsSet([p.moved(motion) for p in self.pieces], self.eps, self.dim)

    def contains(self, x, u, tol=1e-7):
        """ Is (x, u) in some piece? """
        x = np.atleast_2d(x)
        for p in self.pieces:
            if p.base.contains(x, tol)[0] and p.contains_normals(u)[0]:
                return True
        return False


def _check_certificate(f, K, certify_missing):
    cert = f.certificate
    if cert is None or cert.value != 0.0 or not cert.covers(K):
        if not certify_missing:
            raise CertificationMissingError('No weak regularity certificate for the window')
        certify(f, K)
    elif not cert.regular:
        raise CertificationMissingError('0 is not a weakly regular value')


def nor_eps(f, eps, K, certify_missing=True):
    """ nor_eps f over the window K: zero cells of f with the normalized long Clarke vectors """
    if eps <= 0:
        raise PreconditionError('eps must be positive')
    _check_certificate(f, K, certify_missing)
    pieces = []
    for cell in refinement_cells(f, K):
        if cell.fmax > gc.tolerance():
            continue
        H = clarke_exact(f, cell.witness)
        if H.max_norm < eps:
            continue
        pieces.append(NorEpsPiece(cell.polytope, H, eps))
    logger.debug('nor_eps with {} pieces'.format(len(pieces)))
    return NorEpsSet(pieces, eps, f.dim)


def nor_eps_measure(nor, n_mc=200000, rng=None):
    """ (d-1)-measure of nor_eps f: base volume times patch measure over the top dimensional pieces """
    rng = np.random.default_rng(rng)
    total = 0.0
    for p in nor.pieces:
        if p.dim != nor.dim - 1:
            continue
        total += gc.face_volume(p.base.vertices, p.base_dim)*p.patch_measure(n_mc, rng)
    return total


def antipodal_patches(p, q):
    """ Is there a unit u in the patch of p with -u in the patch of q?
        u is in a patch iff eps*u is in conv(0, Clarke hull), so both patches are the unit vectors of
        convex bodies holding 0 and they meet iff their common part reaches the unit sphere. """
    zero = np.zeros((1, p.hull.dim))
    Kp = gc.HPolytope.from_vertices(np.vstack([zero, p.hull.points/p.eps]))
    Kq = gc.HPolytope.from_vertices(np.vstack([zero, -q.hull.points/q.eps]))
    common = gc.intersect(Kp, Kq, strict=False)
    if not common.nonempty():
        return False
    return float(np.linalg.norm(common.vertices, axis=1).max()) >= 1.0 - gc.tolerance()


def _default_window(f):
    if f.certificate is None:
        raise CertificationMissingError('A window is needed for an uncertified function')
    return f.certificate.window


def transversality_check(f, g, motion, eps, U=None, V=None):
    """ Looks for x carrying u in nor_eps f and -u in motion(nor_eps g).
        Returns (transversal, gap). The gap is the smallest angle between the normal cone of a piece
        of f and the opposite normal cone of a piece of motion(g) over a common base point, 0 when
        some antipodal normals exist and +inf when no bases meet. Cones that meet only outside the
        eps patches don't take part in the gap. """
    U = _default_window(f) if U is None else U
    V = _default_window(g) if V is None else V
    nf = nor_eps(f, eps, U)
    ng = nor_eps(g, eps, V).moved(motion)
    gap = np.inf
    for p, q in itertools.product(nf.pieces, ng.pieces):
        if not gc.intersect(p.base, q.base, strict=False).nonempty():
            continue
        opp = gc.Cone(-q.cone.generators, dim=q.cone.dim)
        if p.cone.meets(opp):
            if antipodal_patches(p, q):
                logger.debug('Antipodal normals over {}'.format(p.base.vertices.mean(axis=0).tolist()))
                return False, 0.0
            continue
        gap = min(gap, gc.cone_angle(p.cone, opp))
    return gap > gc.tolerance(), gap


def eps0_bound(f, g, motion, U=None, V=None, eps=None):
    """ Lower bound of |xi + R eta| for xi in df(x), eta in dg(motion^-1 x) outside A and motion(B).
        Returns (bound, witness point or None). """
    U = _default_window(f) if U is None else U
    V = _default_window(g) if V is None else V
    if eps is None:
        known = [c.eps0 for c in (f.certificate, g.certificate) if c is not None and np.isfinite(c.eps0)]
        eps = 0.5*min(known + [1.0])
    ok, _ = transversality_check(f, g, motion, eps, U, V)
    h = aura_sum_motion(f, g, motion)
    window = gc.intersect(U, motion.apply_polytope(V), strict=False)
    inv = motion.inverse()
    best = np.inf
    witness = None
    for cell in refinement_cells(h, window):
        if cell.fmax <= gc.tolerance() and ok:
            continue
        x = cell.witness
        H = clarke_exact(f, x) + clarke_exact(g, inv.apply(x)[0]).rotated(motion.rotation)
        _, n = min_norm_clarke(H)
        if not ok:
            # Without transversality report the boundary points where the sum vanishes
            if cell.fmax <= gc.tolerance() and n <= gc.tolerance():
                return 0.0, x
            continue
        if n < best:
            best = n
            witness = x
    if not ok:
        return 0.0, witness
    return float(best), witness
