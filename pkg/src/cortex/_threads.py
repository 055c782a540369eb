"""Worker-count policy driven by ``CORTEX_THREADS``."""

import contextlib
import os

from threadpoolctl import threadpool_limits


def worker_count() -> int:
    raw = os.environ.get("CORTEX_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


@contextlib.contextmanager
def blas_threads(pinned: bool = False):
    """Cap BLAS threads at the configured count.

    ``pinned`` applies the cap even when ``CORTEX_THREADS`` is unset, so a
    determinism-mode run always sees the same thread count.
    """
    if pinned or os.environ.get("CORTEX_THREADS"):
        with threadpool_limits(limits=worker_count(), user_api="blas"):
            yield
    else:
        yield
