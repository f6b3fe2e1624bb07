"""Corpora, objectives and the training curriculum."""
