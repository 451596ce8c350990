"""
Kinematic formulas on (R^d, SE(d)).

The motion measure is the rotation probability times Lebesgue measure on translations.
Under this normalization

    int Phi_j(A n gB, E_phi n gE_psi) dg = sum_{k+l=d+j} c^j_{k,l} Phi_k(A, E_phi) Phi_l(B, E_psi)

and the constants come from the template method on pairs of balls.
"""
import functools
import itertools
import numpy as np
from scipy.special import beta, comb, gamma

from kinemalab.misc import (CHUNK, TAU, ToleranceAmbiguityError, GeneralPositionError, SingularSystemError,
                            ResampleAbortError, PreconditionError, DEFAULT_TOLERANCES)
from kinemalab import geom_core as gc
from kinemalab import curvature as cv
from kinemalab import parallel
from kinemalab import log
logger = log.get_logger(__name__)

# Attempts to replace a degenerate motion before giving up on a sample
MAX_RETRIES = 100
# Radius pairs for the template solve
RADII = ((1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (0.5, 1.5), (1.5, 0.7), (2.0, 3.0), (0.3, 0.9), (2.5, 1.2))


def haar_rotation(d, rng):
    """ Uniform rotation: QR of a Gaussian matrix with the sign and determinant fixed """
    if d == 1:
        return np.eye(1)
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    Q = Q*np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


class MotionSample(object):
    def __init__(self, motion, weight):
        self.motion = motion
        self.weight = weight

    def __repr__(self):
        return 'MotionSample({}, weight={:.6g})'.format(self.motion, self.weight)


def _bbox(body):
    V = np.vstack([p.vertices for p in gc.Polyconvex.wrap(body).pieces])
    return V.min(axis=0), V.max(axis=0)


def sample_motion(A, B, rng, window=None):
    """ Haar rotation R and a translation uniform in box(A) - box(R B), which holds every
        translation where A and R B + t meet. `window` = (lo, hi) forces a fixed box. """
    lo_a, hi_a = _bbox(A)
    d = len(lo_a)
    R = haar_rotation(d, rng)
    if window is None:
        VB = np.vstack([p.vertices for p in gc.Polyconvex.wrap(B).pieces]) @ R.T
        lo = lo_a - VB.max(axis=0)
        hi = hi_a - VB.min(axis=0)
    else:
        lo, hi = (np.asarray(w, dtype=float) for w in window)
    t = rng.uniform(lo, hi)
    return MotionSample(gc.RigidMotion(R, t), float(np.prod(hi - lo)))


class KinematicConstants(object):
    """ c^j_{k,l} for k + l = d + j """

    def __init__(self, d, j, table, residual):
        self.d = d
        self.j = j
        self.table = table
        self.residual = residual

    def __getitem__(self, kl):
        return self.table[kl]

    def items(self):
        return sorted(self.table.items())

    def to_dict(self):
        return {'d': self.d, 'j': self.j, 'residual': self.residual,
                'table': [[k, l, c] for (k, l), c in self.items()]}

    def __repr__(self):
        return 'KinematicConstants(d={}, j={}, {})'.format(
               self.d, self.j, ', '.join('c{}{}={:.6g}'.format(k, l, c) for (k, l), c in self.items()))


def ball_pair_lhs(d, j, r, s):
    """ int V_j(B_r n gB_s) dg in closed form.
        j = 0 is the volume of the translations that meet; j >= 1 combines the Crofton formula
        for V_j with the Steiner polynomial of the sections. """
    w = cv.ball_volume
    if j == 0:
        return w(d)*(r + s)**d
    crofton = comb(d, j)*w(d)/(w(d - j)*w(j))
    sphere = 2*np.pi**(j/2)/gamma(j/2)
    total = 0.0
    for k in range(d - j + 1):
        total += (w(d - k)*s**(d - k)*comb(d - j, k)*w(d - j)/w(d - j - k)*r**(k + j) *
                  0.5*beta(j/2, k/2 + 1))
    return crofton*sphere*total


@functools.lru_cache(maxsize=None)
def _solve(d, j, radii):
    ks = list(range(j, d + 1))
    M = np.zeros((len(radii), len(ks)))
    y = np.zeros(len(radii))
    for row, (r, s) in enumerate(radii):
        Vr = cv.ball_intrinsic_volumes(d, r).values
        Vs = cv.ball_intrinsic_volumes(d, s).values
        for col, k in enumerate(ks):
            M[row, col] = Vr[k]*Vs[d + j - k]
        y[row] = ball_pair_lhs(d, j, r, s)
    if np.linalg.matrix_rank(M) < len(ks):
        raise SingularSystemError('Rank deficient template system for d={}, j={}'.format(d, j))
    c, *_ = np.linalg.lstsq(M, y, rcond=None)
    residual = float(np.max(np.abs(M @ c - y)/np.maximum(1.0, np.abs(y))))
    return tuple(c), residual


def kinematic_constants(d, j, radii=RADII, max_residual=None):
    if not 0 <= j <= d:
        raise PreconditionError('j must be in [0, d]')
    c, residual = _solve(d, j, tuple(radii))
    max_residual = DEFAULT_TOLERANCES['residual'] if max_residual is None else max_residual
    if residual > max_residual:
        raise SingularSystemError('Template residual {:.3e} for d={}, j={}'.format(residual, d, j))
    table = {(k, d + j - k): float(v) for k, v in zip(range(j, d + 1), c)}
    return KinematicConstants(d, j, table, residual)


def _profile(U, E, d, n_mc, seed):
    U = gc.Polyconvex.wrap(U)
    return np.array([cv.curvature_measure_polyconvex(U, k, E, n_mc, seed) for k in range(d + 1)])


def pkf_rhs(A, B, j, E_phi=None, E_psi=None, constants=None, n_mc=200000, seed=None):
    """ sum_{k+l=d+j} c_{k,l} Phi_k(A, E_phi) Phi_l(B, E_psi) """
    A = gc.Polyconvex.wrap(A)
    d = A.dim
    constants = kinematic_constants(d, j) if constants is None else constants
    PA = _profile(A, E_phi, d, n_mc, seed)
    PB = _profile(B, E_psi, d, n_mc, seed)
    return float(sum(c*PA[k]*PB[l] for (k, l), c in constants.items()))


class MCEstimate(object):
    def __init__(self, value, stderr, samples, resamples):
        self.value = value
        self.stderr = stderr
        self.samples = samples
        self.resamples = resamples

    @property
    def resample_rate(self):
        return self.resamples/max(1, self.samples)

    def __iter__(self):
        return iter((self.value, self.stderr))

    def __repr__(self):
        return 'MCEstimate({:.6g} +- {:.2g}, N={}, resamples={})'.format(self.value, self.stderr,
                                                                          self.samples, self.resamples)


class _Problem(object):
    """ Everything a worker needs to evaluate samples, precomputed once """

    def __init__(self, A, B, j, E_phi, E_psi, window, n_mc, seed):
        self.A = gc.Polyconvex.wrap(A)
        self.B = gc.Polyconvex.wrap(B)
        self.d = self.A.dim
        self.j = j
        self.E_phi = E_phi
        self.E_psi = E_psi
        self.window = window
        self.n_mc = n_mc
        self.seed = seed
        self.nerve_A = gc.nerve(self.A, strict=False)
        self.nerve_B = gc.nerve(self.B, strict=False)
        self.planar = self.d == 2
        if self.planar:
            self.poly_A = [(s, cv.convex_polygon(P.vertices)) for s, P in self.nerve_A]
            self.poly_B = [(s, cv.convex_polygon(P.vertices)) for s, P in self.nerve_B]

    def test_set(self, motion):
        E = self.E_phi
        if self.E_psi is not None:
            moved = motion.apply_polytope(self.E_psi)
            E = moved if E is None else gc.intersect(E, moved, strict=False)
        return E

    def value(self, motion):
        """ Phi_j(A n gB, E_phi n gE_psi), product inclusion-exclusion over both nerves """
        E = self.test_set(motion)
        if E is not None and not E.nonempty():
            return 0.0
        total = 0.0
        if self.planar:
            for (sa, Pa), (sb, Pb) in itertools.product(self.poly_A, self.poly_B):
                Q = motion.apply(Pb)
                inter = cv.planar_intersection(Pa, Q, strict=True)
                if len(inter):
                    total += sa*sb*cv.planar_measures(inter, E)[self.j]
            return total
        for (sa, Pa), (sb, Pb) in itertools.product(self.nerve_A, self.nerve_B):
            inter = gc.intersect(Pa, motion.apply_polytope(Pb), strict=True)
            if inter.nonempty():
                total += sa*sb*cv.curvature_measure(inter, self.j, E, self.n_mc, self.seed)
        return total


def _lhs_chunk(args):
    problem, seed, index, count = args
    rng = parallel.chunk_rng(seed, index)
    s = 0.0
    ss = 0.0
    resamples = 0
    for _ in range(count):
        for _ in range(MAX_RETRIES):
            sample = sample_motion(problem.A, problem.B, rng, problem.window)
            try:
                v = sample.weight*problem.value(sample.motion)
                break
            except (ToleranceAmbiguityError, GeneralPositionError):
                resamples += 1
        else:
            raise ResampleAbortError('No usable motion after {} attempts'.format(MAX_RETRIES))
        s += v
        ss += v*v
    return s, ss, count, resamples


def pkf_lhs_mc(A, B, j, E_phi=None, E_psi=None, N=10000, seed=0, window=None, workers=None,
               max_resample_rate=None, n_mc=200000):
    """ Monte-Carlo estimate of int Phi_j(A n gB, E_phi n gE_psi) dg """
    problem = _Problem(A, B, j, E_phi, E_psi, window, n_mc, seed)
    jobs = [(problem, seed, i, n) for i, n in parallel.chunks(N)]
    with parallel.worker_pool(workers) as pmap:
        parts = pmap(_lhs_chunk, jobs)
    S = sum(p[0] for p in parts)
    SS = sum(p[1] for p in parts)
    resamples = sum(p[3] for p in parts)
    mean = S/N
    var = max(SS/N - mean*mean, 0.0)*N/max(1, N - 1)
    est = MCEstimate(mean, np.sqrt(var/N), N, resamples)
    max_rate = DEFAULT_TOLERANCES['resample_rate'] if max_resample_rate is None else max_resample_rate
    if resamples:
        logger.warning('{} degenerate motions resampled ({:.3%})'.format(resamples, est.resample_rate))
    if est.resample_rate > max_rate:
        raise ResampleAbortError('Resample rate {:.3%} over the {:.3%} limit'.format(est.resample_rate, max_rate))
    logger.debug(est)
    return est


class PKFReport(object):
    def __init__(self, lhs, stderr, rhs, samples, seed, resample_rate, constants, z_max):
        self.lhs = lhs
        self.stderr = stderr
        self.rhs = rhs
        self.samples = samples
        self.seed = seed
        self.resample_rate = resample_rate
        self.constants = constants
        if stderr > 0:
            self.z = (lhs - rhs)/stderr
        else:
            self.z = 0.0 if abs(lhs - rhs) <= TAU else np.inf
        self.passed = abs(self.z) <= z_max

    def to_dict(self):
        return {'lhs': self.lhs, 'stderr': self.stderr, 'rhs': self.rhs, 'z': self.z, 'samples': self.samples,
                'seed': self.seed, 'resample_rate': self.resample_rate, 'constants': self.constants.to_dict(),
                'passed': self.passed}

    def __repr__(self):
        return 'PKFReport(lhs={:.6f} +- {:.2g}, rhs={:.6f}, z={:.2f})'.format(self.lhs, self.stderr, self.rhs, self.z)


def verify_pkf(A, B, j, E_phi=None, E_psi=None, N=10000, seed=0, z_max=None, workers=None, n_mc=200000,
               max_resample_rate=None):
    A = gc.Polyconvex.wrap(A)
    constants = kinematic_constants(A.dim, j)
    rhs = pkf_rhs(A, B, j, E_phi, E_psi, constants, n_mc, seed)
    est = pkf_lhs_mc(A, B, j, E_phi, E_psi, N, seed, workers=workers, max_resample_rate=max_resample_rate,
                     n_mc=n_mc)
    z_max = DEFAULT_TOLERANCES['z_max'] if z_max is None else z_max
    rep = PKFReport(est.value, est.stderr, rhs, N, seed, est.resample_rate, constants, z_max)
    logger.info(rep)
    return rep


def _intersection_dim(P, Q):
    inter = gc.intersect(P, Q, strict=False)
    return (inter.dim_affine if inter.nonempty() else -1), inter


def _restricted_volume(P, k, E):
    """ vol_k(P n E) """
    if E is not None:
        P = gc.intersect(P, E, strict=False)
        if not P.nonempty():
            return 0.0
    return gc.face_volume(P.vertices, k)


def connecting_term(A, B, motion, k, E=None, n_mc=200000, seed=None):
    """ Pairs of proper faces F of A and G of gB with dim F + dim G = d + k, weighted by the
        measure of the sum of their normal cones (the arcs joining both normals) """
    gB = motion.apply_polytope(B)
    d = A.dim
    LA = A.face_lattice
    LB = gB.face_lattice
    total = 0.0
    for F in LA.faces:
        if F.dim == d:
            continue
        PF = F.as_polytope()
        for G in LB.faces:
            if G.dim == d:
                continue
            s = F.dim + G.dim
            if s < d:
                dim, _ = _intersection_dim(PF, G.as_polytope())
                if dim >= 0:
                    raise GeneralPositionError('Faces of dimensions {} and {} meet'.format(F.dim, G.dim))
                continue
            if s != d + k:
                continue
            dim, inter = _intersection_dim(PF, G.as_polytope())
            if dim < 0:
                continue
            if dim != s - d:
                raise GeneralPositionError('Faces of dimensions {} and {} meet in dimension {}'.
                                           format(F.dim, G.dim, dim))
            cone = gc.normal_cone(A, F) + gc.normal_cone(gB, G)
            if not cone.pointed or cone.span_dim != d - k:
                raise GeneralPositionError('Non transversal normal cones at {}'.
                                           format(inter.vertices.mean(axis=0).tolist()))
            vol = _restricted_volume(inter, k, E)
            if vol:
                total += vol*cv.cone_measure(cone, n_mc, cv.face_stream(seed, F)).value
    return total


def decomposition_check(A, B, motion, k, E=None, n_mc=200000, seed=None):
    """ Phi_k(A n gB, E) against connecting term + A's faces inside gB + gB's faces inside A.
        Returns (lhs, rhs, |lhs - rhs|).
        For k = d there are no faces to weigh: both sides are the volume of A n gB n E, lhs through
        the curvature measure and rhs directly, so it only cross-checks those two evaluations. """
    gB = motion.apply_polytope(B)
    d = A.dim
    inter = gc.intersect(A, gB, strict=False)
    lhs = cv.curvature_measure(inter, k, E, n_mc, seed) if inter.nonempty() else 0.0
    if k == d:
        # Volume isn't carried by the normal cycle, only the interior term remains
        rhs = _restricted_volume(inter, d, E) if inter.nonempty() else 0.0
        return lhs, rhs, abs(lhs - rhs)
    rhs = connecting_term(A, B, motion, k, E, n_mc, seed)
    for P, Q in ((A, gB), (gB, A)):
        for F in P.face_lattice.k_faces(k):
            part = gc.intersect(F.as_polytope(), Q, strict=False)
            if not part.nonempty():
                continue
            vol = _restricted_volume(part, k, E)
            if vol:
                rhs += vol*cv.external_angle(P, F, n_mc, seed).value
    logger.debug('Decomposition k={}: {:.12g} vs {:.12g}'.format(k, lhs, rhs))
    return lhs, rhs, abs(lhs - rhs)
