from concurrent.futures import ThreadPoolExecutor
import time
from typing import Callable, Iterable, TypeVar

import numpy as np
from rich.console import Console

T = TypeVar('T')
U = TypeVar('U')

_console = Console(stderr=True, highlight=False)


def log(*args):
    _console.print(*args)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn_generators(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split a generator into n independent streams.

    The streams depend only on the generator's seed and n, so a parallel
    evaluation over them is reproducible regardless of worker count.
    """
    assert n >= 1, f'need at least one stream, got {n}'
    return rng.spawn(n)


def split_count(total: int, parts: int) -> list[int]:
    """Split total into `parts` nearly-equal non-negative counts."""
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def chunks(total: int, size: int) -> Iterable[int]:
    """Yield chunk sizes covering total, each at most size."""
    while total > 0:
        n = min(size, total)
        yield n
        total -= n


def parallel_map(fn: Callable[[T], U], items: Iterable[T], workers: int = 1) -> list[U]:
    """Map fn over items, preserving order. workers > 1 uses threads."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class Timer:
    def __init__(self, label: str = 'Elapsed time'):
        self.label = label

    def __enter__(self):
        self.start_secs = time.time()
        return self

    def __exit__(self, type, value, traceback):
        self.elapsed_secs = time.time() - self.start_secs
        log(f'{self.label}: {self.elapsed_secs:g}s')
