"""Rich markup styling for pathrank console output.

Every styled span names a palette role rather than a color, so tables, key/value
blocks, importance bars and ordering verdicts stay consistent.
"""

import sys

from rich.markup import escape


PALETTE: dict[str, str] = {
    "title": "bold white",
    "label": "dim white",
    "value": "magenta",
    "pass": "bold green",
    "fail": "bold red",
    "gain": "bold blue",
    "loss": "bold red",
}


def should_use_color(color_flag: bool | None) -> bool:
    """Explicit flag wins; otherwise color only when stdout is a terminal."""
    return sys.stdout.isatty() if color_flag is None else color_flag


def styled(text: str, role: str, enabled: bool) -> str:
    """Wrap `text` in the markup of one palette role, escaping brackets in the text."""
    if not enabled:
        return text
    return f"[{PALETTE[role]}]{escape(text)}[/]"


def verdict(passed: bool, enabled: bool) -> str:
    """PASS or FAIL of an ordering or majority check."""
    return styled("PASS", "pass", enabled) if passed else styled("FAIL", "fail", enabled)


def importance_role(value: float) -> str:
    """Palette role of a signed importance bar."""
    return "gain" if value >= 0.0 else "loss"
