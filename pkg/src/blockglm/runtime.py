"""SPMD worker lifecycle, the in-process reduction transport and the
asynchronous load balancing (ALB) progress monitor.

Collectives are blocking and ordered; every rank must issue the same sequence
of calls. Results of a reduction are bitwise identical on every rank: one
leader sums the deposited vectors in fixed rank order and all ranks copy the
same result buffer.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ProtocolError, TransportError


class StopSignal:
    """A once-per-iteration flag, wait-free to read from the solve loop.

    ``flag`` is a one-element int8 array shared with the descent kernels.
    """

    def __init__(self):
        self.flag = np.zeros(1, dtype=np.int8)

    @property
    def fired(self) -> bool:
        return bool(self.flag[0])

    def fire(self) -> None:
        self.flag[0] = 1

    def reset(self) -> None:
        self.flag[0] = 0


class ProgressMonitor:
    """Counts ranks that completed a full pass; fires the shared stop signal
    once ceil(kappa * M) of them have reported.

    Iterations are identified by an epoch number. Resetting happens lazily on
    the first ``start_iteration`` call with a new epoch; this is safe because
    the collectives at the end of an iteration order all ranks' solve phases.
    """

    def __init__(self, world_size: int, kappa: float):
        if not (0.0 < kappa <= 1.0):
            raise ValueError("kappa must be in (0, 1]")
        self.world_size = world_size
        self.kappa = kappa
        self.threshold = max(1, math.ceil(kappa * world_size))
        self.stop = StopSignal()
        self._lock = threading.Lock()
        self._epoch = -1
        self._completed: set[int] = set()

    def start_iteration(self, epoch: int) -> None:
        with self._lock:
            if epoch != self._epoch:
                self._epoch = epoch
                self._completed.clear()
                self.stop.reset()

    def report_complete(self, rank: int) -> None:
        with self._lock:
            self._completed.add(rank)
            if len(self._completed) >= self.threshold:
                self.stop.fire()

    def should_stop(self) -> bool:
        return self.stop.fired

    def stop_signal(self, rank: int) -> StopSignal:
        return self.stop


def alb_should_stop(monitor: ProgressMonitor) -> bool:
    return monitor.should_stop()


def alb_report_complete(monitor: ProgressMonitor, rank: int) -> None:
    monitor.report_complete(rank)


@dataclass
class ReduceRecord:
    label: str
    length: int
    payload_bytes: int


class _World:
    """State shared by the in-process ranks of one SPMD group."""

    def __init__(self, world_size: int, timeout: float):
        self.world_size = world_size
        self.timeout = timeout
        self.slots: list = [None] * world_size
        self.tags: list = [None] * world_size
        self.result: np.ndarray | None = None
        self.error: str | None = None
        self.barrier = threading.Barrier(world_size)
        self.monitor_lock = threading.Lock()
        self.monitors: dict[float, ProgressMonitor] = {}

    def monitor(self, kappa: float) -> ProgressMonitor:
        with self.monitor_lock:
            if kappa not in self.monitors:
                self.monitors[kappa] = ProgressMonitor(self.world_size, kappa)
            return self.monitors[kappa]


class InProcessTransport:
    """One rank's endpoint of the shared-memory reduction transport."""

    def __init__(self, world: _World, rank: int):
        self._world = world
        self.rank = rank
        self.world_size = world.world_size
        self._seq = 0
        self.bytes_reduced = 0
        self.reduce_log: list[ReduceRecord] = []

    def _wait(self) -> None:
        try:
            self._world.barrier.wait(timeout=self._world.timeout)
        except threading.BrokenBarrierError as exc:
            raise TransportError(
                f"collective aborted on rank {self.rank} (peer failure or timeout)"
            ) from exc

    def allreduce_sum(self, vector: np.ndarray, label: str = "") -> np.ndarray:
        w = self._world
        vector = np.ascontiguousarray(np.atleast_1d(np.asarray(vector, dtype=np.float64)))
        tag = (self._seq, label, vector.shape[0])
        self._seq += 1
        w.slots[self.rank] = vector
        w.tags[self.rank] = tag
        self._wait()
        if self.rank == 0:
            if any(t != tag for t in w.tags):
                w.error = f"mismatched collective calls: {w.tags!r}"
                w.result = None
            else:
                w.error = None
                total = w.slots[0].copy()
                for r in range(1, w.world_size):
                    total += w.slots[r]
                w.result = total
        self._wait()
        err = w.error
        result = None if err else w.result.copy()
        self._wait()
        if err:
            raise ProtocolError(err)
        nbytes = 8 * vector.shape[0]
        self.bytes_reduced += nbytes
        self.reduce_log.append(ReduceRecord(label, vector.shape[0], nbytes))
        return result

    def progress_monitor(self, kappa: float) -> ProgressMonitor:
        return self._world.monitor(kappa)

    def close(self) -> None:
        pass


@dataclass
class WorkerFailure(RuntimeError):
    rank: int
    cause: BaseException

    def __str__(self) -> str:
        return f"worker rank {self.rank} failed: {self.cause!r}"


def make_inprocess_world(
    world_size: int, timeout: float = 120.0
) -> list[InProcessTransport]:
    world = _World(world_size, timeout)
    return [InProcessTransport(world, r) for r in range(world_size)]


def spawn_spmd(
    world_size: int,
    worker_body: Callable[[InProcessTransport], object],
    timeout: float = 120.0,
) -> list:
    """Run ``worker_body`` on ranks 0..M-1 over a shared in-process transport.

    Returns per-rank results in rank order, or raises the first failure with
    rank attribution (aborting the remaining ranks' collectives).
    """
    if world_size < 1:
        raise ValueError("world_size must be >= 1")
    transports = make_inprocess_world(world_size, timeout)
    results: list = [None] * world_size
    failures: list[WorkerFailure] = []
    lock = threading.Lock()

    def run(rank: int) -> None:
        try:
            results[rank] = worker_body(transports[rank])
        except BaseException as exc:  # noqa: BLE001 - reported with rank attribution
            with lock:
                failures.append(WorkerFailure(rank, exc))
            transports[rank]._world.barrier.abort()

    threads = [
        threading.Thread(target=run, args=(r,), name=f"spmd-rank-{r}")
        for r in range(world_size)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        # Prefer the root cause: a rank's own exception (or a detected
        # protocol mismatch) over the broken-barrier errors it induced.
        def induced(f: WorkerFailure) -> bool:
            return isinstance(f.cause, TransportError) and not isinstance(
                f.cause, ProtocolError
            )

        failures.sort(key=lambda f: (induced(f), f.rank))
        raise failures[0]
    return results
