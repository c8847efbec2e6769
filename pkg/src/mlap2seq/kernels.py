"""Scatter/segment kernels used by the graph ops.

Two implementations of every kernel live here: a numba ``@njit`` version and
a pure-numpy version. The active one is picked once at import time; set
``MLAP2SEQ_DISABLE_NUMBA=1`` to force the numpy path (or when numba is not
installed). Both variants are always importable so they can be compared.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_disabled():
    return os.environ.get("MLAP2SEQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def segment_sum_numpy(values, segment_ids, num_segments):
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``segment_ids``."""
    out = np.zeros((num_segments,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, segment_ids, values)
    return out


def segment_max_numpy(values, segment_ids, num_segments):
    out = np.full((num_segments,) + values.shape[1:], -np.inf, dtype=values.dtype)
    np.maximum.at(out, segment_ids, values)
    return out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True)
    def _segment_sum_2d(values, segment_ids, out):
        n, d = values.shape
        for i in range(n):
            s = segment_ids[i]
            for j in range(d):
                out[s, j] += values[i, j]
        return out

    @numba.njit(cache=True)
    def _segment_max_2d(values, segment_ids, out):
        n, d = values.shape
        for i in range(n):
            s = segment_ids[i]
            for j in range(d):
                v = values[i, j]
                if v > out[s, j]:
                    out[s, j] = v
        return out

    def _as_2d(values):
        width = int(np.prod(values.shape[1:], dtype=np.int64))
        return values.reshape(values.shape[0], width)

    def segment_sum_numba(values, segment_ids, num_segments):
        tail = values.shape[1:]
        out = np.zeros((num_segments, int(np.prod(tail, dtype=np.int64))), dtype=values.dtype)
        _segment_sum_2d(np.ascontiguousarray(_as_2d(values)), np.ascontiguousarray(segment_ids, dtype=np.int64), out)
        return out.reshape((num_segments,) + tail)

    def segment_max_numba(values, segment_ids, num_segments):
        tail = values.shape[1:]
        out = np.full((num_segments, int(np.prod(tail, dtype=np.int64))), -np.inf, dtype=values.dtype)
        _segment_max_2d(np.ascontiguousarray(_as_2d(values)), np.ascontiguousarray(segment_ids, dtype=np.int64), out)
        return out.reshape((num_segments,) + tail)

else:  # pragma: no cover
    segment_sum_numba = None
    segment_max_numba = None


USE_NUMBA = numba is not None and not _env_disabled()

if USE_NUMBA:
    segment_sum = segment_sum_numba
    segment_max = segment_max_numba
else:
    segment_sum = segment_sum_numpy
    segment_max = segment_max_numpy


def backend():
    """Name of the active kernel backend (``"numba"`` or ``"numpy"``)."""
    return "numba" if USE_NUMBA else "numpy"
