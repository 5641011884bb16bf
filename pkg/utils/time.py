import time
from contextlib import contextmanager
from typing import Iterator


class Stopwatch:
    def __init__(self):
        self.started = time.perf_counter()
        self.stopped = None

    def stop(self) -> float:
        self.stopped = time.perf_counter()
        return self.elapsed_ms

    @property
    def elapsed_ms(self) -> float:
        end = self.stopped if self.stopped is not None else time.perf_counter()
        return (end - self.started) * 1000.0


@contextmanager
def timed() -> Iterator[Stopwatch]:
    watch = Stopwatch()
    try:
        yield watch
    finally:
        watch.stop()
