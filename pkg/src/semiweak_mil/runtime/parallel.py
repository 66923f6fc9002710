"""Ordered, bounded-concurrency mapping for per-bag work.

Forward passes over different bags are independent, so evaluation and pseudo
bag classification can fan out over worker threads. Results always come back
in input order, which keeps every downstream reduction deterministic.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from functools import partial
from typing import TypeVar

import anyio
import anyio.to_thread

T = TypeVar("T")
R = TypeVar("R")


class OrderedMapper:
    """Apply a pure function to many items with at most ``max_workers`` in flight."""

    def __init__(self, *, max_workers: int = 1) -> None:
        if max_workers < 1:
            raise ValueError("max_workers must be at least 1")
        self._max_workers = max_workers

    @property
    def max_workers(self) -> int:
        return self._max_workers

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        if self._max_workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        return anyio.run(self._run_batch, fn, items)

    async def _run_batch(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        limiter = anyio.CapacityLimiter(self._max_workers)
        results: list[R | None] = [None] * len(items)
        failures: list[Exception | None] = [None] * len(items)

        async def _execute(index: int, item: T) -> None:
            try:
                results[index] = await anyio.to_thread.run_sync(partial(fn, item), limiter=limiter)
            except Exception as exc:
                failures[index] = exc

        async with anyio.create_task_group() as tg:
            for index, item in enumerate(items):
                tg.start_soon(_execute, index, item)

        # Re-raise the earliest failure by input position, not by completion time.
        for failure in failures:
            if failure is not None:
                raise failure
        return results  # type: ignore[return-value]


def map_ordered(fn: Callable[[T], R], items: Sequence[T], *, max_workers: int = 1) -> list[R]:
    return OrderedMapper(max_workers=max_workers).map(fn, items)


__all__ = ["OrderedMapper", "map_ordered"]
