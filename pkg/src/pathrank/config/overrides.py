"""Parser for `--set dotted.path=value` config overrides."""

from __future__ import annotations

import ast
from functools import lru_cache
from typing import TYPE_CHECKING

import typer
from parsy import ParseError, Parser, eof, regex, seq, string


if TYPE_CHECKING:
    from collections.abc import Sequence


type Scalar = bool | int | float | str
type OverrideValue = Scalar | list[Scalar]


def _lexeme(parser: Parser) -> Parser:
    """Consume optional whitespace after parser."""
    return parser << regex(r"\s*")


def _decode_string(token_value: str) -> str:
    decoded = ast.literal_eval(token_value)
    if not isinstance(decoded, str):
        raise typer.BadParameter(f"Invalid string literal {token_value}")
    return decoded


@lru_cache(maxsize=1)
def _make_parser() -> Parser:
    """Create the `path=value` parser."""
    key = regex(r"[A-Za-z_][A-Za-z0-9_-]*")
    path = key.sep_by(string("."), min=1)

    true_literal = regex(r"true(?![A-Za-z0-9_])").result(True)
    false_literal = regex(r"false(?![A-Za-z0-9_])").result(False)
    decimal = regex(r"-?(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?(?![\w.])")
    exponent = regex(r"-?\d+[eE][+-]?\d+(?![\w.])")
    float_literal = (decimal | exponent).map(float)
    int_literal = regex(r"-?\d+(?![\w.])").map(int)
    quoted = regex(r'"(?:[^"\\]|\\.)*"|\'(?:[^\'\\]|\\.)*\'').map(_decode_string)
    bare = regex(r"[^\s,\[\]\"']+")

    scalar = _lexeme(true_literal | false_literal | int_literal | float_literal | quoted | bare)
    items = scalar.sep_by(_lexeme(string(",")))
    list_literal = _lexeme(string("[")) >> items << _lexeme(string("]"))
    value = list_literal | scalar

    return seq(path << _lexeme(string("=")), regex(r"\s*") >> value) << eof


def parse_override(text: str) -> tuple[tuple[str, ...], OverrideValue]:
    """Parse one override into its key path and typed value."""
    try:
        keys, value = _make_parser().parse(text.strip())
    except ParseError as exc:
        raise typer.BadParameter(f"Invalid override '{text}': {exc}") from exc
    return tuple(keys), value


def apply_overrides(raw: dict[str, object], overrides: Sequence[str]) -> dict[str, object]:
    """Return a copy of a raw config with every override applied in order."""
    result = _copy(raw)
    for text in overrides:
        keys, value = parse_override(text)
        section = result
        for key in keys[:-1]:
            nested = section.get(key)
            if nested is None:
                nested = {}
                section[key] = nested
            if not isinstance(nested, dict):
                raise typer.BadParameter(f"Invalid override '{text}': '{key}' is not a section")
            section = nested
        section[keys[-1]] = value
    return result


def _copy(raw: dict[str, object]) -> dict[str, object]:
    return {key: _copy(value) if isinstance(value, dict) else value for key, value in raw.items()}
