"""Tests for org."""
