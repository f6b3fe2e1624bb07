"""Run artifacts and parallel execution."""
