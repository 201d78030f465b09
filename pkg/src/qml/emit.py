"""Byte-stable CSV/JSON output with atomic file replacement."""

from __future__ import annotations

import io
import json
import math
import os
import sys
from pathlib import Path

from qml.errors import CacheError


def format_value(v) -> str:
    """Fixed 17-significant-digit floats; integers and strings as-is."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.17g}" if math.isfinite(v) else "null"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if hasattr(v, "item"):  # numpy scalar
        return _json_value(v.item())
    return json.dumps(str(v))


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(format_value(_plain(row[h])) for h in header) + "\n")
    return buf.getvalue()


def to_json(header, rows, metadata=None) -> str:
    """An array of row objects (fields in header order, plus ``metadata`` when given)."""
    if not rows:
        return "[]\n"
    items = []
    for row in rows:
        obj = {h: _plain(row[h]) for h in header}
        if metadata:
            obj["metadata"] = metadata
        items.append("  " + _json_value(obj))
    return "[\n" + ",\n".join(items) + "\n]\n"


def _plain(v):
    return v.item() if hasattr(v, "item") else v


def render(header, rows, fmt: str = "csv", metadata=None) -> str:
    if fmt == "csv":
        return to_csv(header, rows)
    if fmt == "json":
        return to_json(header, rows, metadata)
    raise ValueError(f"unknown format {fmt!r}")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise CacheError(f"cannot write {path}: {exc}") from exc


def emit(header, rows, fmt: str = "csv", path=None, metadata=None) -> None:
    """Write a table to ``path`` atomically, or to stdout when path is None or '-'."""
    text = render(header, rows, fmt, metadata)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        atomic_write_text(path, text)
