import numpy as np
import pytest

from tagsync.correlate import _count_pairs_kernel
from tagsync.streams import TagStream


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba kernels once so timing-sensitive tests and
    # hypothesis deadlines are not hit by JIT latency
    t = np.arange(4, dtype=np.int64)
    _count_pairs_kernel(t, t, np.int64(-1), np.int64(1))


def make_stream(ticks, lsb_ps=1, clock_id="", duration_ps=None):
    ticks = np.asarray(sorted(int(t) for t in ticks), dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(ticks[-1]) * lsb_ps if ticks.size else 0
    return TagStream(ticks, lsb_ps=lsb_ps, clock_id=clock_id, duration_ps=duration_ps)


@pytest.fixture
def stream_factory():
    return make_stream


def random_stream_pair(rng, n_max=200, span=10**6):
    n = int(rng.integers(0, n_max + 1))
    m = int(rng.integers(0, n_max + 1))
    a = np.sort(rng.integers(0, span, n))
    b = np.sort(rng.integers(0, span, m))
    return make_stream(a, duration_ps=span), make_stream(b, duration_ps=span)
