"""Tests for pathrank.pipeline.parallel."""

from __future__ import annotations

import pytest

from pathrank.pipeline.parallel import parallel_map


def test_inline_map_keeps_order() -> None:
    """A single job maps in place."""
    assert parallel_map(str.upper, ["a", "b", "c"]) == ["A", "B", "C"]


def test_process_pool_keeps_order() -> None:
    """Worker processes return results in input order."""
    items = [-3, 1, -2, 5, -8]

    assert parallel_map(abs, items, jobs=2) == [3, 1, 2, 5, 8]


def test_empty_input() -> None:
    """Nothing to map gives nothing back."""
    assert parallel_map(abs, [], jobs=4) == []


def test_jobs_must_be_positive() -> None:
    """Zero workers is a configuration error."""
    with pytest.raises(ValueError, match="at least 1"):
        parallel_map(abs, [1], jobs=0)
