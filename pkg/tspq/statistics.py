# coding: utf-8
"""Streaming, MPI-collectable statistics over groups of run results.

``GroupedStatistics`` keeps a running count, mean, sum of squared
deviations, minimum and maximum per group, and can merge the partial
results from several processes.  The merge follows Schubert & Gertz
2018, Numerically Stable Parallel Computation of (Co-)Variance.
"""
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

# numba speeds up the per-value loops.  Export TSPQ_NO_JIT to anything other
# than "0" to turn it off; it is also off when numba is not installed.
if os.environ.get("TSPQ_NO_JIT", "0") != "0":
    njit = lambda p: p
else:
    try:
        from numba import njit
    except ImportError:
        njit = lambda p: p


def _add_values_core(group, values, _count, _mean, _M2, _min, _max):
    n = len(values)
    for i in range(n):
        value = values[i]
        _count[group] += 1
        delta = value - _mean[group]
        _mean[group] += delta / _count[group]
        delta2 = value - _mean[group]
        _M2[group] += delta * delta2
        if value < _min[group]:
            _min[group] = value
        if value > _max[group]:
            _max[group] = value


_add_values = njit(_add_values_core)


class GroupedStatistics:
    """Incremental count, mean, variance, min and max in ``size`` groups.

    Life-cycle: create one on each process, feed it with ``add_datum`` or
    ``add_data``, then call ``collect`` once (with the communicator if
    running in parallel).  ``run`` does all of that for an iterator.

    Groups that never receive a value come back with count 0 and nan for
    every other statistic.

    Attributes
    ----------
    size: int
        number of groups
    """

    def __init__(self, size):
        self.size = size
        self._count = np.zeros(size)
        self._mean = np.zeros(size)
        self._M2 = np.zeros(size)
        self._min = np.full(size, np.inf)
        self._max = np.full(size, -np.inf)

    def add_datum(self, group, value):
        """Add one value to a group."""
        self._count[group] += 1
        delta = value - self._mean[group]
        self._mean[group] += delta / self._count[group]
        delta2 = value - self._mean[group]
        self._M2[group] += delta * delta2
        self._min[group] = min(self._min[group], value)
        self._max[group] = max(self._max[group], value)

    def add_data(self, group, values):
        """Add a sequence of values that all belong to ``group``."""
        values = np.asarray(values, dtype=float)
        _add_values(group, values, self._count, self._mean, self._M2, self._min, self._max)

    @staticmethod
    def _accumulate(count, mean, sq, lo, hi, c, m, s, l, h):
        good = c != 0
        count[good] = count[good] + c[good]
        delta = m[good] - mean[good]
        mean[good] = mean[good] + (c[good] / count[good]) * delta
        delta2 = m[good] - mean[good]
        sq[good] = sq[good] + s[good] + c[good] * delta * delta2
        np.minimum(lo, l, out=lo)
        np.maximum(hi, h, out=hi)
        return count, mean, sq, lo, hi

    @np.errstate(divide="ignore", invalid="ignore")
    def collect(self, comm=None, mode="gather"):
        """Finish the calculation, merging partial results from every process.

        With mode "allgather" every process gets the results; with
        "gather" only the root does and the others get None values.
        Call it once: the internal arrays are released afterwards.

        Parameters
        ----------
        comm: MPI communicator, optional
        mode: str, optional
            'gather' (default) or 'allgather'

        Returns
        -------
        count: array
        mean: array
        variance: array
            population variance (divide by the count)
        minimum: array
        maximum: array
        """
        if mode not in ("gather", "allgather"):
            raise ValueError("mode for GroupedStatistics.collect must be 'gather' or 'allgather'")

        arrays = [self._count, self._mean, self._M2, self._min, self._max]
        del self._count, self._mean, self._M2, self._min, self._max

        if comm is None or comm.Get_size() == 1:
            return self._finish(*arrays)

        rank = comm.Get_rank()
        if rank > 0:
            for a in arrays:
                comm.Send(a, dest=0)
            results = [np.empty(self.size) for _ in range(5)] if mode == "allgather" else None
        else:
            buffers = [np.empty(self.size) for _ in range(5)]
            for source in range(1, comm.Get_size()):
                for b in buffers:
                    comm.Recv(b, source=source)
                arrays = list(self._accumulate(*arrays, *buffers))
            results = list(self._finish(*arrays))

        if mode == "allgather":
            for r in results:
                comm.Bcast(r)
            return tuple(results)
        if rank > 0:
            return None, None, None, None, None
        return tuple(results)

    @staticmethod
    @np.errstate(divide="ignore", invalid="ignore")
    def _finish(count, mean, sq, lo, hi):
        variance = sq / count
        empty = count == 0
        for a in (mean, variance, lo, hi):
            a[empty] = np.nan
        return count, mean, variance, lo, hi

    def run(self, iterator, comm=None, mode="gather"):
        """Feed ``(group, values)`` pairs from an iterator, then collect."""
        for group, values in iterator:
            self.add_data(group, values)
        return self.collect(comm=comm, mode=mode)


def sample_variance(count, variance):
    """Turn population variances into n-1 denominators; single values give 0."""
    count = np.asarray(count, dtype=float)
    variance = np.asarray(variance, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(count > 1, variance * count / (count - 1), 0.0)
    out[count == 0] = np.nan
    return out
