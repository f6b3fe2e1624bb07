"""pathrank - Path-instruction compatibility models for vision-and-language navigation."""

from pathrank.cli import main


__version__ = "0.1.0"

__all__ = [
    "__version__",
    "main",
]
