"""JSON writer emitting floats at 17 significant digits.

The stdlib encoder uses repr() for floats (shortest round-trip); output files
here pin the ``%.17g`` format instead so every float serializes with full
round-trip precision in a fixed width, byte-stable across runs.
"""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["dumps"]


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r} as JSON")
    return format(x, ".17g")


def _write(obj, parts: list[str], indent: int | None, level: int) -> None:
    if isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif obj is None:
        parts.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(_format_float(float(obj)))
    elif isinstance(obj, np.ndarray):
        _write(obj.tolist(), parts, indent, level)
    elif isinstance(obj, (list, tuple)):
        if not obj:
            parts.append("[]")
            return
        open_, close, sep, pad = _delims("[", "]", indent, level)
        parts.append(open_)
        for i, item in enumerate(obj):
            if i:
                parts.append(sep)
            parts.append(pad)
            _write(item, parts, indent, level + 1)
        parts.append(close)
    elif isinstance(obj, dict):
        if not obj:
            parts.append("{}")
            return
        open_, close, sep, pad = _delims("{", "}", indent, level)
        parts.append(open_)
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if i:
                parts.append(sep)
            parts.append(pad)
            parts.append(json.dumps(key))
            parts.append(": ")
            _write(value, parts, indent, level + 1)
        parts.append(close)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} as JSON")


def _delims(open_: str, close: str, indent: int | None, level: int):
    if indent is None:
        return open_, close, ", ", ""
    pad = "\n" + " " * (indent * (level + 1))
    closing = "\n" + " " * (indent * level) + close
    return open_, closing, ",", pad


def dumps(obj, indent: int | None = None) -> str:
    parts: list[str] = []
    _write(obj, parts, indent, 0)
    return "".join(parts)
