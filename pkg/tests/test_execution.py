"""Tests for per-video execution and atomic output."""

import threading
import time

import pytest

from src.errors import InputOutputError
from src.execution import read_input, run_all, run_per_video, write_atomic


class TestRunPerVideo:
    async def test_results_keep_input_order(self):
        def slow_square(n):
            time.sleep(0.01 * (5 - n))
            return n * n

        assert await run_per_video(list(range(5)), slow_square, workers=3) == [0, 1, 4, 9, 16]

    async def test_worker_limit(self):
        running = 0
        peak = 0
        lock = threading.Lock()

        def work(_):
            nonlocal running, peak
            with lock:
                running += 1
                peak = max(peak, running)
            time.sleep(0.02)
            with lock:
                running -= 1

        await run_per_video(list(range(8)), work, workers=2)
        assert peak <= 2

    async def test_first_error_propagates(self):
        def boom(n):
            if n == 2:
                raise ValueError("video 2 failed")
            return n

        with pytest.raises(ValueError, match="video 2"):
            await run_per_video([0, 1, 2, 3], boom, workers=4)


class TestRunAll:
    def test_sequential_and_parallel_agree(self):
        items = list(range(10))
        assert run_all(items, lambda n: n + 1, workers=1) == run_all(items, lambda n: n + 1, workers=4)

    def test_empty(self):
        assert run_all([], lambda n: n, workers=4) == []


class TestFiles:
    def test_write_atomic(self, tmp_path):
        target = tmp_path / "nested" / "out.ndjson"
        write_atomic(target, b"one\n")
        write_atomic(target, b"two\n")
        assert target.read_bytes() == b"two\n"
        assert [p.name for p in target.parent.iterdir()] == ["out.ndjson"]

    def test_write_to_directory_fails(self, tmp_path):
        with pytest.raises(InputOutputError) as err:
            write_atomic(tmp_path, b"x")
        assert err.value.exit_code == 3

    def test_read_missing(self, tmp_path):
        with pytest.raises(InputOutputError):
            read_input(tmp_path / "absent.ndjson")

    def test_read_round_trip(self, tmp_path):
        path = tmp_path / "in.csv"
        path.write_bytes(b"a,b\n")
        assert read_input(path) == b"a,b\n"
