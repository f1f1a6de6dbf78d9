"""Bounded worker pool for sweep and verification cells.

Cells are named tasks with status tracking; a failing cell is recorded, never
raised, and results come back in submission order so parallelism cannot change
what gets written.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Hashable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Generic, TypeVar

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import CellFailure

logger = logging.getLogger(__name__)

K = TypeVar("K", bound=Hashable)
R = TypeVar("R")


class TaskStatus(StrEnum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class CellTask(Generic[K, R]):
    key: K
    status: TaskStatus = TaskStatus.PENDING
    result: R | None = None
    failure: CellFailure | None = None
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def elapsed(self) -> float:
        if self.started_at == 0:
            return 0.0
        return (self.finished_at or time.time()) - self.started_at

    @property
    def ok(self) -> bool:
        return self.status is TaskStatus.COMPLETED

    def summary(self) -> str:
        head = f"{self.key} - {self.status} ({self.elapsed:.2f}s)"
        return head + (f"\n  ! {self.failure.summary()}" if self.failure else "")


class WorkerPool:
    """Runs ``fn(key)`` for every key on at most ``threads`` worker threads.

    Usage:
        pool = WorkerPool()
        tasks = pool.run(cells, evaluate_cell, describe=lambda c: c._asdict())
        rows = [t.result for t in tasks if t.ok]
    """

    def __init__(self, threads: int | None = None) -> None:
        self.threads = max(1, settings.threads if threads is None else threads)

    def run(
        self,
        keys: Iterable[K],
        fn: Callable[[K], R],
        *,
        describe: Callable[[K], dict[str, Any]] | None = None,
    ) -> list[CellTask[K, R]]:
        tasks = [CellTask(key=k) for k in keys]

        def execute(task: CellTask[K, R]) -> CellTask[K, R]:
            task.status = TaskStatus.RUNNING
            task.started_at = time.time()
            try:
                task.result = fn(task.key)
                task.status = TaskStatus.COMPLETED
            except Exception as exc:
                cell = describe(task.key) if describe else {"key": repr(task.key)}
                task.failure = CellFailure.from_exception(exc, cell)
                task.status = TaskStatus.FAILED
                logger.warning("Cell failed: %s", task.failure.summary())
            finally:
                task.finished_at = time.time()
            return task

        if self.threads == 1 or len(tasks) <= 1:
            done = [execute(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="cell") as pool:
                done = list(pool.map(execute, tasks))
        failed = sum(1 for t in done if not t.ok)
        logger.debug("Pool finished %d cells (%d failed, %d threads)", len(done), failed, self.threads)
        return done

    @staticmethod
    def summary(tasks: list[CellTask[Any, Any]]) -> str:
        done = sum(1 for t in tasks if t.ok)
        return f"Cells: {done} completed, {len(tasks) - done} failed"
