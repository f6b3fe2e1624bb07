"""Configuration package for the pathrank CLI."""
