import math

import pytest

from odediscover.errors import ConfigError
from odediscover.parallel import THREADS_ENV, create_batches, resolve_threads, run_tasks


def test_create_batches():
    assert create_batches(list(range(7)), 3) == [[0, 1, 2], [3, 4, 5], [6]]
    assert create_batches([], 3) == []
    with pytest.raises(ConfigError):
        create_batches([1], 0)


def test_resolve_threads(monkeypatch):
    assert resolve_threads(3) == 3
    monkeypatch.setenv(THREADS_ENV, "5")
    assert resolve_threads() == 5
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError, match=THREADS_ENV):
        resolve_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads() >= 1
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_run_tasks_inline():
    assert run_tasks(math.factorial, [3, 0, 5], threads=1) == [6, 1, 120]
    assert run_tasks(math.factorial, [], threads=4) == []


def test_run_tasks_keeps_task_order_across_workers():
    tasks = list(range(-20, 0))
    assert run_tasks(abs, tasks, threads=2, batch_size=3) == [abs(t) for t in tasks]
