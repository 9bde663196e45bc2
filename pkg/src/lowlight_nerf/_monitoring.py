"""Resident memory sampling and run fingerprints for training and experiments."""

from __future__ import annotations

import hashlib
import os
import threading
import time
from typing import TYPE_CHECKING

import psutil

if TYPE_CHECKING:
    from lowlight_nerf.checkpoint import Checkpoint


def get_memory_usage_mb() -> float:
    return psutil.Process(os.getpid()).memory_info().rss / 1024 / 1024


class MemoryTracker:
    """Peak RSS of this process, sampled every 10 ms by a background thread."""

    def __init__(self, interval: float = 0.01) -> None:
        self.interval = interval
        self.process = psutil.Process(os.getpid())
        self.initial_memory = 0.0
        self.peak_memory = 0.0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def __enter__(self) -> MemoryTracker:
        self.start_monitoring()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.stop_monitoring()

    def current(self) -> float:
        return self.process.memory_info().rss / 1024 / 1024

    def update(self) -> float:
        current = self.current()
        self.peak_memory = max(self.peak_memory, current)
        return current

    def start_monitoring(self) -> None:
        self.initial_memory = self.current()
        self.peak_memory = self.initial_memory
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop_monitoring(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=1.0)
            self._thread = None
        self.update()

    def _loop(self) -> None:
        while not self._stop.wait(self.interval):
            self.update()

    def report(self) -> str:
        final = self.current()
        return (
            f"Memory: {self.initial_memory:.1f} -> {final:.1f} MB "
            f"(Δ{final - self.initial_memory:+.1f}, peak: {self.peak_memory:.1f})"
        )


def checkpoint_hash(ckpt: Checkpoint) -> str:
    """md5 over all checkpoint arrays; equal hashes mean bit-identical parameters."""
    digest = hashlib.md5()
    for name, value in ckpt.flat_arrays().items():
        digest.update(name.encode("utf-8"))
        digest.update(value.tobytes())
    return digest.hexdigest()
