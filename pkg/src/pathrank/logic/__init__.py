"""Environments, instructions, candidate mining and evaluation."""
