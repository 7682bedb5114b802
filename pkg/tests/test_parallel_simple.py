"""
Simple tests for the parallel.py module
"""

import threading
import time

import pytest

from src.errors import ConvergenceError
from src.parallel import ParallelRunner, Task, WorkerStats, run_tasks


class TestWorkerStats:
    """Tests for the WorkerStats class."""

    def test_worker_stats_creation(self):
        """Test creation of worker statistics."""
        stats = WorkerStats(worker_id=1)

        assert stats.worker_id == 1
        assert stats.tasks_processed == 0
        assert stats.errors_count == 0
        assert stats.total_processing_time == 0.0
        assert stats.last_activity is None


class TestParallelRunner:
    """Tests for the ParallelRunner class."""

    def test_worker_floor(self):
        """Test at least one worker slot exists."""
        assert ParallelRunner(max_workers=0).max_workers == 1

    @pytest.mark.asyncio
    async def test_submission_order(self):
        """Test outcomes come back in submission order."""
        runner = ParallelRunner(max_workers=3)
        tasks = [Task(f"t{i}", lambda i=i: (time.sleep(0.01 * (3 - i)), i)[1]) for i in range(3)]
        outcomes = await runner.run(tasks)

        assert [o.result for o in outcomes] == [0, 1, 2]
        assert [o.index for o in outcomes] == [0, 1, 2]
        assert all(o.ok for o in outcomes)

    @pytest.mark.asyncio
    async def test_failure_isolated(self):
        """Test one failing task does not stop the others."""
        runner = ParallelRunner(max_workers=2)

        def fail():
            raise ConvergenceError("no periodic state")

        outcomes = await runner.run([Task("bad", fail), Task("good", lambda: 1.0)])

        assert isinstance(outcomes[0].error, ConvergenceError)
        assert outcomes[1].result == 1.0
        stats = runner.get_stats()
        assert stats["total_tasks"] == 2
        assert stats["total_errors"] == 1

    def test_concurrency_bound(self):
        """Test no more than max_workers tasks run at once."""
        lock = threading.Lock()
        active = [0]
        peak = [0]

        def work():
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.02)
            with lock:
                active[0] -= 1

        outcomes = run_tasks([Task(f"t{i}", work) for i in range(6)], max_workers=2)

        assert len(outcomes) == 6
        assert peak[0] <= 2
        assert {o.worker_id for o in outcomes} <= {0, 1}

    def test_supplied_runner_keeps_stats(self):
        """Test a runner passed to run_tasks reports its work afterwards."""
        runner = ParallelRunner(max_workers=3)

        def fail():
            raise ConvergenceError("no periodic state")

        outcomes = run_tasks([Task("a", lambda: 1), Task("b", fail)], max_workers=1, runner=runner)
        stats = runner.get_stats()

        assert [o.ok for o in outcomes] == [True, False]
        assert stats["workers_used"] == 3
        assert stats["total_tasks"] == 2
        assert stats["total_errors"] == 1
