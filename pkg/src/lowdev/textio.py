"""Plain-text artifact formats.

Columnar files start with ``# <kind>`` and optional ``# key: value`` header
lines, then ``# columns: a b c`` and whitespace-separated rows.  Key-value
reports are ``key = value`` lines grouped under ``[section]`` headers.
Floats are written with repr so files round-trip exactly.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .fkpp.grid import GridSpec, SpaceTimeField


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [parse_value(p) for p in inner.split(",")] if inner else []
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_columnar(path, kind: str, columns: list[str], rows: Iterable, header: Mapping | None = None) -> Path:
    path = Path(path)
    lines = [f"# {kind}"]
    for key, value in (header or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append("# columns: " + " ".join(columns))
    for row in rows:
        lines.append(" ".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_columnar(path):
    """Returns (kind, header dict, columns, rows as list of lists)."""
    kind, header, columns, rows = None, {}, [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if kind is None:
                kind = body
            elif body.startswith("columns:"):
                columns = body.split(":", 1)[1].split()
            elif ":" in body:
                key, value = body.split(":", 1)
                header[key.strip()] = value.strip()
            continue
        rows.append([parse_value(tok) for tok in line.split()])
    return kind, header, columns, rows


def write_field(path, field: SpaceTimeField) -> Path:
    rows = []
    for i, t in enumerate(field.times):
        for x, val in zip(field.nodes(i), field.values[i]):
            rows.append((float(t), float(x), float(val)))
    return write_columnar(path, field.field_kind, ["t", "x", "value"], rows, {"grid": field.grid.header()})


def read_field(path) -> SpaceTimeField:
    kind, header, _, rows = read_columnar(path)
    x_min, x_max, dx, dt, t_max = (float(v) for v in header["grid"].split())
    grid = GridSpec(x_min, x_max, dx, dt, t_max)
    data = np.array(rows, dtype=float)
    times = np.unique(data[:, 0])
    n = grid.n_cells
    values = data[:, 2].reshape(len(times), n)
    first_x = data[::n, 1]
    offsets = np.rint((first_x - grid.nodes[0]) / dx).astype(int)
    return SpaceTimeField(grid, times, offsets, values, kind)


def write_kv(path, groups: Mapping[str, Mapping]) -> Path:
    lines = []
    for name, items in groups.items():
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key, value in items.items():
            lines.append(f"{key} = {format_value(value)}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_kv(path) -> dict:
    groups: dict = {}
    current = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]") and "=" not in line:
            current = groups.setdefault(line[1:-1], {})
            continue
        key, value = line.split("=", 1)
        if current is None:
            current = groups.setdefault("", {})
        current[key.strip()] = parse_value(value)
    return groups
