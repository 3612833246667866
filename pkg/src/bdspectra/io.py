"""CSV and JSON emission with shortest round-trip float formatting."""

from __future__ import annotations

import contextlib
import json
import math
import sys
from typing import Iterable, Sequence

import numpy as np

__all__ = ["format_value", "write_csv", "write_json", "rows_to_records", "open_output", "jsonable"]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def jsonable(v):
    """Plain-Python copy of ``v``; NaN and infinities become null."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


@contextlib.contextmanager
def open_output(path):
    """Yield a text stream for ``path``; ``-`` or None means standard output."""
    if path in (None, "-"):
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def write_csv(stream, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(format_value(v) for v in row) + "\n")
        stream.flush() if stream is sys.stdout else None


def rows_to_records(header: Sequence[str], rows: Iterable[Sequence]) -> list:
    return [dict(zip(header, row)) for row in rows]


def write_json(stream, obj) -> None:
    stream.write(json.dumps(jsonable(obj), allow_nan=False) + "\n")
