"""In-memory batch-job registry with on-disk artifacts.

Jobs move queued -> running -> done|failed, never backwards. Each job owns a
private directory; tiles render in parallel on a bounded pool and the archive
is written once by the job runner after every tile finished.
"""

from __future__ import annotations

import json
import threading
import uuid
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"

_ORDER = {QUEUED: 0, RUNNING: 1, DONE: 2, FAILED: 2}


@dataclass
class Job:
    job_id: str
    total: int
    job_dir: Path
    state: str = QUEUED
    done_count: int = 0
    error: str | None = None
    archive_path: Path | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def advance(self, state: str) -> None:
        with self._lock:
            if _ORDER[state] < _ORDER[self.state]:
                raise ValueError(f"job {self.job_id}: illegal transition {self.state} -> {state}")
            self.state = state

    def tick(self) -> None:
        with self._lock:
            self.done_count += 1

    def status(self) -> dict:
        with self._lock:
            return {
                "job_id": self.job_id,
                "state": self.state,
                "done": self.done_count,
                "total": self.total,
                "error": self.error,
                "download": f"/jobs/{self.job_id}/download" if self.state == DONE else None,
            }


class JobRegistry:
    def __init__(self, artifacts_dir: Path, worker_count: int):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._dir = Path(artifacts_dir)
        self._tile_pool = ThreadPoolExecutor(max_workers=worker_count, thread_name_prefix="tiles")
        self._runner_pool = ThreadPoolExecutor(max_workers=2, thread_name_prefix="jobs")

    def create(self, total: int) -> Job:
        job_id = uuid.uuid4().hex[:12]
        job_dir = self._dir / job_id
        job_dir.mkdir(parents=True, exist_ok=True)
        job = Job(job_id=job_id, total=total, job_dir=job_dir)
        with self._lock:
            self._jobs[job_id] = job
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def submit(self, job: Job, tile_fns: list, finalize_fn) -> None:
        """Run `tile_fns` on the tile pool, then `finalize_fn` with their results."""

        def runner():
            job.advance(RUNNING)
            try:
                futures = [self._tile_pool.submit(fn) for fn in tile_fns]
                results = []
                for fut in futures:
                    results.append(fut.result())
                    job.tick()
                finalize_fn(job, results)
                job.advance(DONE)
            except Exception as exc:  # surface the failure in the job status
                job.error = f"{type(exc).__name__}: {exc}"
                job.advance(FAILED)

        self._runner_pool.submit(runner)


def write_archive(job: Job, named_tiles: list[tuple[str, "object"]], manifest: dict, stitched=None) -> Path:
    """Write per-tile PNGs, a manifest, and an optional stitched sheet into a zip."""
    archive = job.job_dir / "tiles.zip"
    with zipfile.ZipFile(archive, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, pixels in named_tiles:
            png = job.job_dir / name
            Image.fromarray(pixels).save(png)
            zf.write(png, arcname=name)
        zf.writestr("manifest.json", json.dumps(manifest, indent=2))
        if stitched is not None:
            png = job.job_dir / "stitched.png"
            Image.fromarray(stitched).save(png)
            zf.write(png, arcname="stitched.png")
    job.archive_path = archive
    return archive
