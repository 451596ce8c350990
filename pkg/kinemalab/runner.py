"""
Experiment runner: strict JSON configs, dispatch to the library and the run reports.

A config looks like:

    {"experiment": "pkf", "seed": 42,
     "inputs": {"bodies": ["a.json", "b.json"], "phi": "box.json"},
     "params": {"j": 0, "samples": 100000},
     "tolerances": {"z_max": 4},
     "outputs": {"report": "report.json", "csv": "rows.csv"}}
"""
import os
import json
import time
import hashlib
from dataclasses import dataclass, field
import numpy as np

from kinemalab import __version__
from kinemalab.misc import (DEFAULT_TOLERANCES, ConfigError, KinemaError, PreconditionError, CRITERIA_FAILED)
from kinemalab import geom_core as gc
from kinemalab import dc_aura as dc
from kinemalab import curvature as cv
from kinemalab import kinematic as km
from kinemalab import content as ct
from kinemalab import file_util as fu
from kinemalab import log
logger = log.get_logger(__name__)

# Allowed input and parameter keys for each experiment
EXPERIMENTS = {
    'pkf': (('bodies', 'phi', 'psi'), ('j', 'samples', 'workers', 'n_mc')),
    'decomposition': (('bodies', 'motion', 'test_set'), ('k', 'motions', 'n_mc')),
    'steiner': (('bodies',), ('eps', 'samples', 'n_mc')),
    'content': (('bodies', 'function', 'window'),
                ('set', 'eps_grid', 'samples', 'm', 'eps', 'expected_dimension', 'normal', 'h0', 'h1', 'workers')),
    'weakreg': (('function', 'body', 'window'), ('c', 'delta', 'expected_eps0')),
    'constants': ((), ('d', 'j')),
}
CONFIG_KEYS = ('experiment', 'seed', 'inputs', 'params', 'tolerances', 'outputs')
OUTPUT_KEYS = ('report', 'csv')
CONTENT_SETS = ('sigma', 'tk', 'tk-slab', 'noreps', 'graph')


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError('Unknown experiment `{}` (use one of {})'.format(self.experiment,
                              ', '.join(sorted(EXPERIMENTS))))
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError('The seed must be a non negative integer')
        inputs, params = EXPERIMENTS[self.experiment]
        for name, value, allowed in (('inputs', self.inputs, inputs), ('params', self.params, params),
                                     ('tolerances', self.tolerances, DEFAULT_TOLERANCES),
                                     ('outputs', self.outputs, OUTPUT_KEYS)):
            if not isinstance(value, dict):
                raise ConfigError('`{}` must be a JSON object'.format(name))
            extra = set(value) - set(allowed)
            if extra:
                raise ConfigError('Unknown {} for `{}`: {}'.format(name, self.experiment, ', '.join(sorted(extra))))
        for k, v in self.tolerances.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError('The `{}` tolerance must be positive'.format(k))

    @classmethod
    def from_data(cls, data, file='<config>'):
        if not isinstance(data, dict):
            raise ConfigError('`{}` must contain a JSON object'.format(file))
        extra = set(data) - set(CONFIG_KEYS)
        if extra:
            raise ConfigError('Unknown keys in `{}`: {}'.format(file, ', '.join(sorted(extra))))
        for k in ('experiment', 'seed'):
            if k not in data:
                raise ConfigError('Missing `{}` in `{}`'.format(k, file))
        return cls(**{k: data[k] for k in CONFIG_KEYS if k in data})

    @classmethod
    def load(cls, file):
        return cls.from_data(fu.load_json(file, 'config'), file)

    def tolerance(self, name):
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def param(self, name, default=None):
        return self.params.get(name, default)

    def to_dict(self):
        return {k: getattr(self, k) for k in CONFIG_KEYS}

    def merged(self, seed=None, params=None, outputs=None, inputs=None):
        """ Copy with the inline CLI values taking precedence """
        return ExperimentConfig(self.experiment, self.seed if seed is None else seed,
                                dict(self.inputs, **(inputs or {})), dict(self.params, **(params or {})),
                                dict(self.tolerances), dict(self.outputs, **(outputs or {})))

    @property
    def hash(self):
        return config_hash(self)


def config_hash(config):
    """ sha256 of the canonical JSON of the config, the output paths don't take part """
    data = config.to_dict() if isinstance(config, ExperimentConfig) else dict(config)
    data.pop('outputs', None)
    text = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunReport:
    experiment: dict
    criteria: dict
    metrics: dict
    wall_clock: float
    counters: dict
    version: str
    config_hash: str
    rows: list = field(default_factory=list, repr=False)
    header: tuple = ()
    error: str = None
    error_code: int = 0

    @property
    def passed(self):
        return self.error is None and all(self.criteria.values())

    @property
    def exit_code(self):
        if self.error is not None:
            return self.error_code
        return 0 if self.passed else CRITERIA_FAILED

    def to_dict(self):
        res = {'experiment': self.experiment, 'criteria': self.criteria, 'metrics': self.metrics,
               'wall_clock': self.wall_clock, 'counters': self.counters, 'version': self.version,
               'config_hash': self.config_hash, 'passed': self.passed}
        if self.error is not None:
            res['error'] = self.error
        return res


def verify_config_hash(report, config):
    """ Checks a stored report (dict or RunReport) was produced by this config """
    stored = report.config_hash if isinstance(report, RunReport) else report.get('config_hash')
    ok = stored == config_hash(config)
    if not ok:
        logger.warning('Config hash mismatch: report {} vs config {}'.format(stored, config_hash(config)))
    return ok


def _finite(v):
    """ JSON friendly numbers """
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    return v


def _bodies(config, count=None):
    files = config.inputs.get('bodies')
    if files is None:
        raise ConfigError('`{}` needs `inputs.bodies`'.format(config.experiment))
    if isinstance(files, str):
        files = [files]
    if count is not None and len(files) != count:
        raise ConfigError('`{}` needs exactly {} bodies'.format(config.experiment, count))
    return [fu.load_body(f) for f in files]


def _single(body, what):
    if len(body.pieces) != 1:
        raise ConfigError('{} must be a single convex polytope'.format(what))
    return body.pieces[0]


def _optional(config, key, loader):
    file = config.inputs.get(key)
    return loader(file) if file else None


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _run_pkf(config):
    A, B = _bodies(config, 2)
    phi = _optional(config, 'phi', fu.load_box)
    psi = _optional(config, 'psi', fu.load_box)
    N = int(config.param('samples', 100000))
    n_mc = int(config.param('n_mc', 200000))
    criteria = {}
    metrics = {}
    rows = []
    for j in _as_list(config.param('j', 0)):
        rep = km.verify_pkf(A, B, int(j), phi, psi, N, config.seed, config.tolerance('z_max'),
                            config.param('workers'), n_mc, config.tolerance('resample_rate'))
        criteria['z_j{}'.format(j)] = bool(rep.passed)
        metrics['j{}'.format(j)] = rep.to_dict()
        rows.append((int(j), rep.lhs, rep.stderr, rep.rhs, rep.z, rep.resample_rate))
    return criteria, metrics, ('j', 'lhs', 'stderr', 'rhs', 'z', 'resample_rate'), rows


def _run_decomposition(config):
    A, B = (_single(b, 'Each body') for b in _bodies(config, 2))
    E = _optional(config, 'test_set', fu.load_box)
    n_mc = int(config.param('n_mc', 200000))
    if config.inputs.get('motion'):
        motions = [fu.load_motion(config.inputs['motion'])]
    else:
        rng = np.random.default_rng(config.seed)
        motions = [km.sample_motion(A, B, rng).motion for _ in range(int(config.param('motions', 1)))]
    ks = _as_list(config.param('k', list(range(A.dim + 1))))
    tol = config.tolerance('decomposition')
    worst = 0.0
    rows = []
    for i, g in enumerate(motions):
        for k in ks:
            lhs, rhs, diff = km.decomposition_check(A, B, g, int(k), E, n_mc, config.seed)
            worst = max(worst, diff)
            rows.append((i, int(k), lhs, rhs, diff))
    return ({'decomposition': worst <= tol}, {'max_diff': worst, 'motions': len(motions)},
            ('motion', 'k', 'lhs', 'rhs', 'diff'), rows)


def _run_steiner(config):
    bodies = [_single(b, 'Each body') for b in _bodies(config)]
    eps_list = _as_list(config.param('eps', [0.1, 0.5, 1.0]))
    N = int(config.param('samples', 200000))
    n_angle = int(config.param('n_mc', 200000))
    factor = config.tolerance('stderr_factor')
    rows = []
    failed = 0
    for i, P in enumerate(bodies):
        for e in eps_list:
            formula, mc, err = cv.steiner_volume(P, float(e), N, config.seed, n_angle)
            if abs(formula - mc) > factor*err:
                failed += 1
                logger.warning('Steiner mismatch for body {} at eps={}: {:.6g} vs {:.6g} +- {:.2g}'.
                               format(i, e, formula, mc, err))
            rows.append((i, float(e), formula, mc, err))
    return {'steiner': failed == 0}, {'checks': len(rows), 'failed': failed}, \
        ('body', 'eps', 'formula', 'mc', 'stderr'), rows


def _content_set(config, kind):
    if kind in ('sigma',):
        A, B = (_single(b, 'Each body') for b in _bodies(config, 2))
        return ct.sigma_set(A, B), A.dim - 1
    if kind in ('tk', 'tk-slab'):
        K = _single(_bodies(config, 1)[0], 'The body')
        if kind == 'tk':
            return ct.tk_set(K), K.dim - 2
        normal = config.param('normal')
        if normal is None or config.param('h0') is None or config.param('h1') is None:
            raise ConfigError('`tk-slab` needs `normal`, `h0` and `h1`')
        return ct.tk_slab_set(K, normal, float(config.param('h0')), float(config.param('h1'))), K.dim - 2
    f, window = _function(config)
    if kind == 'graph':
        return ct.graph_clarke_set(f, window), f.dim
    eps = config.param('eps')
    if eps is None:
        raise ConfigError('`noreps` needs `eps`')
    return ct.nor_eps_pieces(dc.nor_eps(f, float(eps), window)), f.dim - 1


def _run_content(config):
    kind = config.param('set', 'sigma')
    if kind not in CONTENT_SETS:
        raise ConfigError('Unknown content set `{}` (use one of {})'.format(kind, ', '.join(CONTENT_SETS)))
    S, m = _content_set(config, kind)
    m = int(config.param('m', m))
    grid = config.param('eps_grid')
    curve = ct.content_curve(S, grid, int(config.param('samples', 200000)), config.seed, config.param('workers', 1))
    est = ct.estimate_content(curve, m)
    criteria = {}
    expected = config.param('expected_dimension')
    if expected is not None:
        criteria['dimension'] = abs(est.dimension - expected) <= config.tolerance('dimension')
    ratio = float(np.max(est.measure)/np.min(est.measure)) if np.min(est.measure) > 0 else np.inf
    metrics = {'set': kind, 'm': m, 'dimension': est.dimension, 'dim_stderr': est.dim_stderr,
               'residual': est.residual, 'measure_ratio': ratio, 'pieces': len(S)}
    return criteria, metrics, ('eps', 'cover_upper', 'pack_lower', 'content_lo', 'content_hi'), est.rows()


def _function(config):
    window = _optional(config, 'window', fu.load_box)
    if config.inputs.get('function'):
        f = fu.load_dc(config.inputs['function'])
    elif config.inputs.get('body'):
        P = _single(fu.load_body(config.inputs['body']), 'The body')
        f = dc.aura_polytope(P)
    elif config.inputs.get('bodies'):
        f = dc.aura_polytope(_single(_bodies(config, 1)[0], 'The body'))
    else:
        raise ConfigError('`{}` needs a `function` or a `body`'.format(config.experiment))
    if window is None:
        if f.certificate is None:
            raise ConfigError('A `window` is needed for `{}`'.format(config.inputs.get('function')))
        window = f.certificate.window
    return f, window


def _run_weakreg(config):
    f, window = _function(config)
    cert = dc.weak_regularity(f, float(config.param('c', 0.0)), window, float(config.param('delta', 1.0)))
    criteria = {'regular': bool(cert.regular)}
    expected = config.param('expected_eps0')
    if expected is not None:
        criteria['eps0'] = abs(cert.eps0 - expected) <= config.tolerance('residual')
    rows = [(cert.value, cert.delta, cert.eps0, cert.band_cells)]
    return criteria, cert.to_dict(), ('c', 'delta', 'eps0', 'band_cells'), rows


def _run_constants(config):
    d = int(config.param('d', 2))
    rows = []
    metrics = {}
    tol = config.tolerance('residual')
    ok = True
    for j in _as_list(config.param('j', list(range(d + 1)))):
        c = km.kinematic_constants(d, int(j), max_residual=tol)
        ok &= c.residual <= tol
        metrics['j{}'.format(j)] = c.to_dict()
        rows.extend((d, int(j), k, l, v) for (k, l), v in c.items())
    return {'residual': bool(ok)}, metrics, ('d', 'j', 'k', 'l', 'c'), rows


RUNNERS = {
    'pkf': _run_pkf,
    'decomposition': _run_decomposition,
    'steiner': _run_steiner,
    'content': _run_content,
    'weakreg': _run_weakreg,
    'constants': _run_constants,
}


def run(config):
    """ Runs the experiment, writes the outputs named in the config and returns the report.
        Library errors don't escape: they end in the report with their exit code. """
    logger.info('Running `{}` with seed {}'.format(config.experiment, config.seed))
    log.warning_counts(reset=True)
    start = time.perf_counter()
    criteria, metrics, header, rows = {}, {}, (), []
    error = None
    code = 0
    try:
        with gc.tau_scope(config.tolerance('tau')):
            criteria, metrics, header, rows = RUNNERS[config.experiment](config)
    except KinemaError as e:
        logger.error(str(e))
        error = '{}: {}'.format(type(e).__name__, e)
        code = e.exit_code
    report = RunReport(config.to_dict(), {k: bool(v) for k, v in criteria.items()}, _finite(metrics),
                       time.perf_counter() - start, log.warning_counts(reset=True), __version__, config_hash(config),
                       rows, header, error, code)
    _save(report, config)
    if report.passed:
        logger.info('All the criteria passed')
    elif error is None:
        logger.warning('Failed criteria: {}'.format(', '.join(k for k, v in report.criteria.items() if not v)))
    return report


def _save(report, config):
    out = config.outputs
    if out.get('report'):
        fu.save_json(out['report'], report.to_dict())
    if out.get('csv') and report.rows:
        fu.write_csv(out['csv'], report.header, report.rows)


# Test corpus

def _random_hull(d, n, rng, radius=1.0):
    for _ in range(100):
        P = gc.HPolytope.from_vertices(radius*rng.standard_normal((n, d)))
        if P.is_full_dim():
            return P
    raise PreconditionError('Could not draw a full dimensional hull')


def _union_ring(d, width=1.0):
    """ Four slabs around a square hole, an annulus (times [0, 1] for d = 3) """
    if d not in (2, 3):
        raise PreconditionError('union-ring is defined for d = 2 or 3')
    w = width
    rects = [((0, 0), (3*w, w)), ((0, 2*w), (3*w, 3*w)), ((0, 0), (w, 3*w)), ((2*w, 0), (3*w, 3*w))]
    extra_lo = [0.0]*(d - 2)
    extra_hi = [1.0]*(d - 2)
    return gc.Polyconvex([gc.box(list(lo) + extra_lo, list(hi) + extra_hi) for lo, hi in rects])


def corpus_generate(kind, params=None, seed=0, out_dir=None):
    """ Deterministic bodies for tests and sweeps. Returns a list of (name, body) and writes
        `name.json` files when out_dir is given. """
    params = params or {}
    rng = np.random.default_rng(seed)
    d = int(params.get('d', 2))
    count = int(params.get('count', 1))
    bodies = []
    for i in range(count):
        if kind == 'random-hull':
            body = _random_hull(d, int(params.get('n', 8)), rng, float(params.get('radius', 1.0)))
        elif kind == 'box':
            body = gc.box(np.full(d, float(params.get('lo', 0.0))), np.full(d, float(params.get('hi', 1.0))))
        elif kind == 'simplex':
            V = np.vstack([np.zeros(d), np.eye(d)])
            if params.get('random'):
                V = rng.standard_normal((d + 1, d))
            body = gc.HPolytope.from_vertices(V)
        elif kind == 'union-ring':
            body = _union_ring(d, float(params.get('width', 1.0)))
        else:
            raise ConfigError('Unknown corpus kind `{}`'.format(kind))
        bodies.append(('{}-{:03d}'.format(kind, i), body))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for name, body in bodies:
            fu.save_json(os.path.join(out_dir, name + '.json'), body.to_dict())
    logger.info('Generated {} `{}` bodies'.format(len(bodies), kind))
    return bodies
