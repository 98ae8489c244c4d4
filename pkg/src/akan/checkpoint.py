"""Versioned structured-text checkpoint files.

Layout: a header line ``akan-checkpoint <version>``, then ``<key> <value>``
field lines, then ``array <name> <dim...>`` blocks whose rows follow one per
line, then a closing ``end`` line. Every float is rendered with %.17g, which
round-trips float64 bit-exactly through decimal text.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np

from .errors import (
    NonFiniteValueError,
    SchemaVersionError,
    StructuralError,
    TruncatedCheckpointError,
)

SCHEMA_VERSION = 1
_HEADER_TAG = "akan-checkpoint"


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise NonFiniteValueError(f"refusing to serialize non-finite value {x!r}")
    return "%.17g" % x


def _format_row(row) -> str:
    return " ".join(format_float(v) for v in row)


def write_checkpoint(path, kind: str, fields: dict, arrays: dict) -> None:
    """Atomically write a checkpoint: fields are scalar/str metadata, arrays
    are name -> 1-D or 2-D float64 ndarray."""
    lines = [f"{_HEADER_TAG} {SCHEMA_VERSION}", f"kind {kind}"]
    for key, value in fields.items():
        if isinstance(value, float):
            value = format_float(value)
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = _format_row(np.asarray(value, dtype=float))
        lines.append(f"{key} {value}")
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            lines.append(f"array {name} {arr.shape[0]}")
            lines.append(_format_row(arr))
        elif arr.ndim == 2:
            lines.append(f"array {name} {arr.shape[0]} {arr.shape[1]}")
            for row in arr:
                lines.append(_format_row(row))
        else:
            raise StructuralError(
                f"array {name!r} has {arr.ndim} dimensions; only 1-D/2-D supported"
            )
    lines.append("end")
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_floats(line: str, count: int, where: str):
    parts = line.split()
    if len(parts) != count:
        raise StructuralError(
            f"{where}: expected {count} values per row, found {len(parts)}"
        )
    try:
        values = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise StructuralError(f"{where}: unparseable float ({exc})") from None
    if not np.all(np.isfinite(values)):
        idx = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteValueError(f"{where}: non-finite value at column {idx}")
    return values


def read_checkpoint(path):
    """Parse a checkpoint file -> (kind, fields, arrays).

    fields values are raw strings; arrays are float64 ndarrays.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaVersionError(f"{path}: empty file, missing checkpoint header")
    head = lines[0].split()
    if len(head) != 2 or head[0] != _HEADER_TAG:
        raise SchemaVersionError(f"{path}: first line is not a checkpoint header")
    if head[1] != str(SCHEMA_VERSION):
        raise SchemaVersionError(
            f"{path}: schema version {head[1]} unsupported (expected {SCHEMA_VERSION})"
        )
    fields: dict = {}
    arrays: dict = {}
    kind = None
    i = 1
    saw_end = False
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.strip():
            continue
        if line == "end":
            saw_end = True
            break
        key, _, rest = line.partition(" ")
        if key == "kind":
            kind = rest.strip()
        elif key == "array":
            spec = rest.split()
            if len(spec) not in (2, 3):
                raise StructuralError(f"{path}: malformed array declaration {line!r}")
            name = spec[0]
            try:
                dims = [int(d) for d in spec[1:]]
            except ValueError:
                raise StructuralError(
                    f"{path}: non-integer dimension in {line!r}"
                ) from None
            rows = 1 if len(dims) == 1 else dims[0]
            cols = dims[0] if len(dims) == 1 else dims[1]
            data = np.empty((rows, cols))
            for r in range(rows):
                if i >= len(lines):
                    raise TruncatedCheckpointError(
                        f"{path}: array {name!r} truncated at row {r} of {rows}"
                    )
                data[r] = _parse_floats(
                    lines[i], cols, f"{path}: array {name!r} row {r}"
                )
                i += 1
            arrays[name] = data[0] if len(dims) == 1 else data
        else:
            fields[key] = rest
    if not saw_end:
        raise TruncatedCheckpointError(f"{path}: missing closing 'end' line")
    if kind is None:
        raise StructuralError(f"{path}: missing 'kind' field")
    return kind, fields, arrays


def field_floats(fields: dict, key: str, count: int, where: str):
    """Parse a header field holding `count` whitespace-separated floats."""
    if key not in fields:
        raise StructuralError(f"{where}: missing field {key!r}")
    return _parse_floats(fields[key], count, f"{where}: field {key!r}")
