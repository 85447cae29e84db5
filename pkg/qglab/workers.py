# SPDX-License-Identifier: Apache-2.0.

"""
Worker pool shared by scans, ensembles and time sampling.

Results always come back in submission order, so outputs do not depend on the thread count.
"""

import concurrent.futures
import logging
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

_default_threads = 1  # type: Optional[int]


def set_default_threads(threads: Optional[int]):
    """
    Set the pool size used when callers pass ``threads=-1``.

    0 or None lets :class:`concurrent.futures.ThreadPoolExecutor` pick its default.
    """
    global _default_threads
    _default_threads = threads if threads else None


def default_threads() -> Optional[int]:
    return _default_threads


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = -1) -> List[R]:
    """
    Apply ``fn`` to every item, in parallel when more than one thread is allowed.

    Args:
        fn: Function to apply; must not mutate shared state.
        items: Inputs.
        threads: Pool size. -1 (default) uses the process-wide setting, None the executor default,
            1 runs inline.

    Returns:
        Results in the order of ``items``. The first exception raised by ``fn`` propagates.
    """
    items = list(items)
    if threads == -1:
        threads = _default_threads
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))
