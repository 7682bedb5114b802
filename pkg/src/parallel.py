"""
Bounded parallel execution of independent solves.
"""

import asyncio
import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

logger = logging.getLogger(__name__)


@dataclass
class WorkerStats:
    """Statistics of one worker slot."""

    worker_id: int
    tasks_processed: int = 0
    errors_count: int = 0
    total_processing_time: float = 0.0
    last_activity: str | None = None


@dataclass
class Task:
    """Named zero-argument callable."""

    name: str
    func: Callable[[], Any]


@dataclass
class TaskOutcome:
    """Result of one task; exactly one of ``result`` and ``error`` is meaningful."""

    name: str
    index: int
    result: Any = None
    error: BaseException | None = None
    runtime: float = 0.0
    worker_id: int = -1

    @property
    def ok(self) -> bool:
        return self.error is None


class ParallelRunner:
    """Runs tasks in worker threads, at most ``max_workers`` at a time."""

    def __init__(self, max_workers: int = 1):
        """
        Initialize the runner.

        Args:
            max_workers: Maximum number of concurrent tasks (>= 1)
        """
        self.max_workers = max(1, int(max_workers))
        self.worker_stats: dict[int, WorkerStats] = {
            i: WorkerStats(i) for i in range(self.max_workers)
        }

    async def run(self, tasks: Sequence[Task]) -> list[TaskOutcome]:
        """
        Run all tasks and return outcomes in submission order.

        A failing task is recorded in its outcome; the others keep running.
        """
        start_time = time.time()
        semaphore = asyncio.Semaphore(self.max_workers)
        free_slots: asyncio.Queue[int] = asyncio.Queue()
        for worker_id in range(self.max_workers):
            free_slots.put_nowait(worker_id)

        async def run_with_semaphore(index: int, task: Task) -> TaskOutcome:
            async with semaphore:
                worker_id = await free_slots.get()
                stats = self.worker_stats[worker_id]
                outcome = TaskOutcome(name=task.name, index=index, worker_id=worker_id)
                task_start = time.time()
                try:
                    logger.debug(f"Worker {worker_id}: started {task.name}")
                    outcome.result = await asyncio.to_thread(task.func)
                    stats.last_activity = f"Completed: {task.name}"
                except Exception as e:
                    outcome.error = e
                    stats.errors_count += 1
                    stats.last_activity = f"Failed: {task.name}"
                    logger.error(f"Worker {worker_id}: task {task.name} failed: {e}")
                finally:
                    outcome.runtime = time.time() - task_start
                    stats.tasks_processed += 1
                    stats.total_processing_time += outcome.runtime
                    free_slots.put_nowait(worker_id)
                return outcome

        outcomes = await asyncio.gather(
            *(run_with_semaphore(i, task) for i, task in enumerate(tasks))
        )
        failures = sum(1 for o in outcomes if not o.ok)
        logger.debug(
            f"Parallel run completed: {len(outcomes) - failures} ok, {failures} failed "
            f"in {time.time() - start_time:.1f}s"
        )
        return list(outcomes)

    def get_stats(self) -> dict[str, Any]:
        """Collect per-worker statistics."""
        worker_details = {}
        for worker_id, stats in self.worker_stats.items():
            worker_details[f"worker_{worker_id}"] = {
                "tasks_processed": stats.tasks_processed,
                "errors_count": stats.errors_count,
                "processing_time": stats.total_processing_time,
                "last_activity": stats.last_activity,
            }
        return {
            "workers_used": self.max_workers,
            "total_tasks": sum(s.tasks_processed for s in self.worker_stats.values()),
            "total_errors": sum(s.errors_count for s in self.worker_stats.values()),
            "worker_details": worker_details,
        }


def run_tasks(
    tasks: Sequence[Task], max_workers: int = 1, runner: ParallelRunner | None = None
) -> list[TaskOutcome]:
    """Synchronous entry point around :meth:`ParallelRunner.run`.

    Pass a runner to read its worker statistics afterwards; ``max_workers``
    is ignored then.
    """
    runner = runner or ParallelRunner(max_workers)
    return asyncio.run(runner.run(tasks))
