"""Histogram rendering functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from pathrank.tui.bits import apply_indent, section_header_lines, visual_len
from pathrank.tui.color import importance_role, styled


if TYPE_CHECKING:
    from collections.abc import Sequence


LABEL_WIDTH = 9


@dataclass(frozen=True)
class HistogramSectionConfig:
    """Configuration for rendering histogram sections."""

    plot_width: int
    color_enabled: bool = False
    indent: str = ""


def _label(name: str) -> str:
    return name[: LABEL_WIDTH - 1] + "." if len(name) > LABEL_WIDTH else name


def render_histogram(
    entries: Sequence[tuple[str, float]],
    plot_width: int,
    color_enabled: bool = False,
) -> list[str]:
    """Render signed values as bars scaled to the largest magnitude, in input order."""
    largest = max((abs(value) for _, value in entries), default=0.0)
    lines = []
    for name, value in entries:
        label = styled(_label(name), "label", color_enabled)
        padding = " " * (LABEL_WIDTH - visual_len(label))
        delimiter = styled("┊", "label", color_enabled)
        prefix = f"{label}{padding}{delimiter}"
        value_text = f" {value:+.3g}"
        available_blocks = max(0, plot_width - visual_len(prefix) - len(value_text))
        bar_length = int(abs(value) / largest * available_blocks) if largest > 0.0 else 0
        glyph = "█" if value >= 0.0 else "▒"
        bars = styled(glyph * bar_length, importance_role(value), color_enabled)
        lines.append(f"{prefix}{bars}{value_text}")
    return lines


def format_histogram_section(
    title: str,
    entries: Sequence[tuple[str, float]],
    config: HistogramSectionConfig,
) -> list[str]:
    """Render one histogram section as indented output lines."""
    lines = section_header_lines(title, config.color_enabled)
    histogram_plot_width = max(3, config.plot_width - 2)
    histogram_lines = render_histogram(entries, histogram_plot_width, config.color_enabled)
    lines.extend([f"  {line}" for line in histogram_lines])
    return apply_indent(lines, config.indent)
