"""Atomic CSV/JSON output with 17-significant-digit floats."""

from __future__ import annotations

import json
import math
import os
import tempfile

__all__ = ["fmt", "dumps_json", "atomic_write", "csv_text", "emit_outputs"]


def fmt(x) -> str:
    return f"{float(x):.17g}"


def dumps_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats written to 17 significant digits (NaN/inf become null)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps_json(str(k))}: {dumps_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(dumps_json(v, indent, _level + 1) for v in obj) + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return dumps_json(obj.item(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def atomic_write(path, text: str):
    """Write ``text`` (UTF-8, ``\\n`` newlines) to a temp file next to ``path``, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif v is None or (isinstance(v, float) and math.isnan(v)):
                cells.append("")
            else:
                cells.append(fmt(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_outputs(out_dir, table=None, summary: dict | None = None, solutions: dict | None = None) -> list:
    """Write ``table.csv``, ``summary.json`` and ``solution_<ell>.csv`` files into ``out_dir``.

    ``table`` is a :class:`~fraccyl.experiments.ConvergenceTable` (or ``None`` for
    a header-only CSV).  ``summary`` always gets a ``"pass"`` key.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, "table.csv")
    atomic_write(path, table.to_csv() if table is not None else "ell,value,local_rate\n")
    written.append(path)
    summary = dict(summary or {})
    summary.setdefault("pass", False)
    path = os.path.join(out_dir, "summary.json")
    atomic_write(path, dumps_json(summary) + "\n")
    written.append(path)
    for ell, u in (solutions or {}).items():
        path = os.path.join(out_dir, f"solution_{float(ell):g}.csv")
        atomic_write(path, u.to_csv())
        written.append(path)
    return written
