"""Compatibility model parameters and forward pass."""
