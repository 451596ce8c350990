"""
Worker pools for the Monte-Carlo loops.

Work is always cut in the same chunks, each one with its own RNG stream, so the
numbers don't depend on how many workers run them.
"""
import os
from contextlib import contextmanager
from concurrent.futures import ProcessPoolExecutor
# python3-psutil
import psutil
import numpy as np

from kinemalab.misc import (THREADS_ENV, CHUNK)
from kinemalab import geom_core as gc
from kinemalab import log
logger = log.get_logger(__name__)


def worker_count():
    """ Physical cores, capped by KINEMALAB_THREADS """
    n = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning('Ignoring wrong {} value `{}`'.format(THREADS_ENV, cap))
    return n


def chunks(total, size=CHUNK):
    """ (index, count) pairs covering `total` items """
    return [(i, min(size, total - i*size)) for i in range((total + size - 1)//size)]


def chunk_rng(seed, index):
    return np.random.default_rng([seed, index])


@contextmanager
def worker_pool(workers=None):
    """ Context manager yielding an order preserving map.
        Use like this: with worker_pool(4) as pmap: results = pmap(func, items) """
    if workers is None:
        workers = worker_count()
    if workers <= 1:
        logger.debug('Running in-process')
        yield lambda func, items: [func(i) for i in items]
        return
    logger.debug('Starting a pool of {} workers'.format(workers))
    # Workers classify incidences with the tolerance of the caller
    executor = ProcessPoolExecutor(max_workers=workers, initializer=gc.set_tau, initargs=(gc.current_tau(),))
    futures = []

    def pmap(func, items):
        submitted = [executor.submit(func, i) for i in items]
        futures.extend(submitted)
        return [f.result() for f in submitted]

    try:
        yield pmap
    finally:
        # An aborted run doesn't wait for the queued work
        for f in futures:
            f.cancel()
        executor.shutdown(wait=True)
        logger.debug('Pool closed')
