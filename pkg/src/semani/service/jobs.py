"""Async jobs: a bounded worker pool with queued->running->{done,failed}."""

from __future__ import annotations

import copy
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

JOB_KINDS = ("segment", "align", "manipulate", "evaluate")
STATES = ("queued", "running", "done", "failed")


@dataclass
class Job:
    id: str
    kind: str
    state: str
    params: dict[str, Any]
    result: dict[str, Any] | None = None
    error: str | None = None
    created: float = field(default_factory=time.time)
    started: float | None = None
    finished: float | None = None

    def view(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "params": copy.deepcopy(self.params),
            "result": copy.deepcopy(self.result),
            "error": self.error,
            "created": self.created,
            "started": self.started,
            "finished": self.finished,
        }


class JobStore:
    """In-memory job table; workers share read-only model weights."""

    def __init__(self, max_workers: int = 2) -> None:
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_workers)

    def submit(
        self, kind: str, params: dict[str, Any], fn: Callable[[], dict[str, Any]]
    ) -> str:
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}")
        job = Job(id=uuid.uuid4().hex, kind=kind, state="queued", params=params)
        with self._lock:
            self._jobs[job.id] = job
        self._pool.submit(self._run, job.id, fn)
        return job.id

    def _run(self, job_id: str, fn: Callable[[], dict[str, Any]]) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if job.state != "queued":
                return
            job.state = "running"
            job.started = time.time()
        try:
            result = fn()
        except Exception as exc:  # failure cause travels to the client
            with self._lock:
                job.state = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
                job.finished = time.time()
            return
        with self._lock:
            job.state = "done"
            job.result = result
            job.finished = time.time()

    def get(self, job_id: str) -> dict[str, Any] | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return None if job is None else job.view()

    def wait(self, job_id: str, timeout: float = 600.0, poll: float = 0.02) -> dict[str, Any]:
        """Block until the job leaves queued/running; for CLI and tests."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            view = self.get(job_id)
            if view is None:
                raise KeyError(job_id)
            if view["state"] in ("done", "failed"):
                return view
            time.sleep(poll)
        raise TimeoutError(f"job {job_id} still running after {timeout}s")

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
