#!/usr/bin/env python
"""
Readers and writers for the exchange formats: bodies, DC functions, boxes and motions
as JSON, tables as CSV.
"""
import os
import csv
import json
import numpy as np

from kinemalab.misc import (ConfigError, KinemaError)
from kinemalab import geom_core as gc
from kinemalab import log
logger = log.get_logger(__name__)


def load_json(file, what='input'):
    if not os.path.isfile(file):
        raise ConfigError("The {} file `{}` doesn't exist".format(what, file))
    logger.debug('Loading {} from `{}`'.format(what, file))
    with open(file, 'r') as f:
        try:
            return json.load(f)
        except ValueError as e:
            raise ConfigError('Syntax error in `{}`: {}'.format(file, e))


def _matrix(data, name, file, cols=None):
    try:
        m = np.array(data, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError('`{}` in `{}` must be a list of numeric rows'.format(name, file))
    if m.ndim != 2 or (cols is not None and m.shape[1] != cols) or not np.all(np.isfinite(m)):
        raise ConfigError('Wrong shape for `{}` in `{}` (expected rows of {} numbers)'.format(name, file, cols))
    return m


def _check_keys(data, allowed, file):
    if not isinstance(data, dict):
        raise ConfigError('`{}` must contain a JSON object'.format(file))
    extra = set(data.keys()) - set(allowed)
    if extra:
        raise ConfigError('Unknown keys in `{}`: {}'.format(file, ', '.join(sorted(extra))))


def polytope_from_data(data, file='<data>'):
    """ HPolytope from its JSON object, checking it is nonempty and bounded """
    _check_keys(data, ('dim', 'halfspaces', 'vertices'), file)
    if 'dim' not in data:
        raise ConfigError('Missing `dim` in `{}`'.format(file))
    d = data['dim']
    if not isinstance(d, int) or d < 1:
        raise ConfigError('`dim` must be a positive integer in `{}`'.format(file))
    if ('halfspaces' in data) == ('vertices' in data):
        raise ConfigError('Use exactly one of `halfspaces` or `vertices` in `{}`'.format(file))
    try:
        if 'vertices' in data:
            P = gc.HPolytope.from_vertices(_matrix(data['vertices'], 'vertices', file, d))
        else:
            P = gc.HPolytope.from_halfspaces(_matrix(data['halfspaces'], 'halfspaces', file, d + 1))
            if not P.bounded:
                raise ConfigError('The polytope in `{}` is unbounded'.format(file))
        if not P.nonempty():
            raise ConfigError('The polytope in `{}` is empty'.format(file))
    except ConfigError:
        raise
    except KinemaError as e:
        raise ConfigError('Invalid polytope in `{}`: {}'.format(file, e))
    return P


def body_from_data(data, file='<data>'):
    """ A single polytope or a polyconvex set, both come back as Polyconvex """
    if isinstance(data, dict) and 'pieces' in data:
        _check_keys(data, ('dim', 'pieces'), file)
        pieces = [polytope_from_data(p, file) for p in data['pieces']]
        if not pieces:
            raise ConfigError('No pieces in `{}`'.format(file))
        if len(set(p.dim for p in pieces)) != 1:
            raise ConfigError('Mixed dimensions in `{}`'.format(file))
        return gc.Polyconvex(pieces)
    return gc.Polyconvex([polytope_from_data(data, file)])


def load_body(file):
    body = body_from_data(load_json(file, 'body'), file)
    logger.info('Loaded a body with {} piece(s) from `{}`'.format(len(body.pieces), file))
    return body


def load_polytope(file):
    return polytope_from_data(load_json(file, 'polytope'), file)


def box_from_data(data, file='<data>'):
    """ Test sets: {"lo", "hi"} boxes or any polytope object """
    if isinstance(data, dict) and 'lo' in data:
        _check_keys(data, ('lo', 'hi'), file)
        lo = np.asarray(data['lo'], dtype=float)
        hi = np.asarray(data.get('hi', []), dtype=float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ConfigError('Wrong box limits in `{}`'.format(file))
        return gc.box(lo, hi)
    return polytope_from_data(data, file)


def load_box(file):
    return box_from_data(load_json(file, 'test set'), file)


def motion_from_data(data, file='<data>'):
    _check_keys(data, ('rotation', 'translation', 'angle'), file)
    t = np.asarray(data.get('translation', [0.0, 0.0]), dtype=float)
    try:
        if 'angle' in data:
            return gc.RigidMotion.planar(float(data['angle']), t)
        R = _matrix(data['rotation'], 'rotation', file, len(t))
        return gc.RigidMotion(R, t)
    except (KeyError, KinemaError) as e:
        raise ConfigError('Invalid motion in `{}`: {}'.format(file, e))


def load_motion(file):
    return motion_from_data(load_json(file, 'motion'), file)


def dc_from_data(data, file='<data>'):
    from kinemalab.dc_aura import DCFunction, PLConvex
    _check_keys(data, ('g', 'h'), file)
    if 'g' not in data:
        raise ConfigError('Missing `g` in `{}`'.format(file))
    g = _matrix(data['g'], 'g', file)
    d = g.shape[1] - 1
    h = data.get('h') or [[0.0]*d + [0.0]]
    h = _matrix(h, 'h', file, d + 1)
    return DCFunction(PLConvex(g[:, :-1], g[:, -1]), PLConvex(h[:, :-1], h[:, -1]))


def load_dc(file):
    return dc_from_data(load_json(file, 'DC function'), file)


def save_json(file, data):
    with open(file, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.debug('Wrote `{}`'.format(file))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(file, header, rows):
    """ CSV with repr() floats, so identical data gives identical bytes """
    with open(file, 'w', newline='') as f:
        w = csv.writer(f, lineterminator='\n')
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    logger.info('Wrote {} rows to `{}`'.format(len(rows), file))
