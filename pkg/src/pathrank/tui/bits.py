"""Terminal output formatting for the pathrank CLI."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING

from rich.cells import cell_len
from rich.console import Console
from rich.text import Text

from pathrank.tui.color import should_use_color, styled


if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence


def lines_to_text(lines: list[str]) -> str:
    """Join rendered lines into one newline-terminated text block."""
    if not lines:
        return ""
    return "\n".join(lines) + "\n"


def setup_output(args: object) -> bool:
    """Configure output settings and return color preference."""
    return should_use_color(getattr(args, "color_flag", None))


def build_console(color_enabled: bool, width: int | None = None) -> Console:
    """Create a Rich console configured for colored output."""
    return Console(no_color=not color_enabled, force_terminal=color_enabled, width=width)


def print_output(console: Console, text: str, color_enabled: bool, *, end: str = "\n") -> None:
    """Print output without Rich line wrapping."""
    if color_enabled:
        rich_text = Text.from_markup(text)
        rich_text.no_wrap = True
        rich_text.overflow = "ignore"
        console.print(rich_text, end=end, soft_wrap=True)
        return
    plain_text = Text(text)
    plain_text.no_wrap = True
    plain_text.overflow = "ignore"
    console.print(plain_text, end=end, markup=False, soft_wrap=True)


@contextmanager
def processing_status(
    console: Console,
    color_enabled: bool,
    message: str = "Processing...",
) -> Iterator[None]:
    """Show a processing spinner when color output is enabled."""
    if color_enabled:
        with console.status(message, spinner="dots", spinner_style="white"):
            yield
        return
    yield


def apply_indent(lines: list[str], indent: str) -> list[str]:
    """Prefix non-empty lines with the requested indentation."""
    if not indent:
        return lines
    return [f"{indent}{line}" if line else "" for line in lines]


def section_header_lines(title: str, color_enabled: bool) -> list[str]:
    """Build standard section header lines."""
    return ["", styled(title, "title", color_enabled)]


def visual_len(text: str) -> int:
    """Get visual length of text (excluding Rich markup)."""
    return cell_len(Text.from_markup(text).plain)


def pad_to_visual_width(text: str, width: int, *, right: bool = False) -> str:
    """Pad text to target visual display width, on the left when `right` aligns it."""
    missing_width = width - visual_len(text)
    if missing_width <= 0:
        return text
    padding = " " * missing_width
    return f"{padding}{text}" if right else f"{text}{padding}"


def format_value(value: object) -> str:
    """Fixed-precision text for floats, plain text otherwise."""
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


@dataclass(frozen=True)
class TableConfig:
    """Configuration for rendering one aligned table."""

    columns: Sequence[str]
    color_enabled: bool
    indent: str = "  "
    highlight: Sequence[str] = ()


def format_table(rows: Sequence[Mapping[str, object]], config: TableConfig) -> list[str]:
    """Render rows as aligned columns; text columns left, numbers right."""
    cells = [[format_value(row.get(column, "")) for column in config.columns] for row in rows]
    widths = [
        max([len(column), *(len(line[index]) for line in cells)])
        for index, column in enumerate(config.columns)
    ]
    numeric = [
        all(isinstance(row.get(column), (int, float)) for row in rows) for column in config.columns
    ]
    header = " ".join(
        pad_to_visual_width(styled(column, "label", config.color_enabled), width, right=is_number)
        for column, width, is_number in zip(config.columns, widths, numeric, strict=True)
    )
    lines = [header]
    for line in cells:
        padded = []
        for column, text, width, is_number in zip(
            config.columns,
            line,
            widths,
            numeric,
            strict=True,
        ):
            cell = (
                styled(text, "value", config.color_enabled) if column in config.highlight else text
            )
            padded.append(pad_to_visual_width(cell, width, right=is_number))
        lines.append(" ".join(padded).rstrip())
    return apply_indent(lines, config.indent)


def format_key_values(pairs: Sequence[tuple[str, object]], color_enabled: bool) -> list[str]:
    """One `key: value` line per pair, values highlighted."""
    return [
        f"{key}: " + styled(format_value(value), "value", color_enabled) for key, value in pairs
    ]
