"""CSV formatting shared by every emitter."""

from __future__ import annotations

import io
from typing import Iterable, Sequence


def fmt(value) -> str:
    # 17 significant digits round-trip doubles exactly
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if hasattr(value, "dtype") and value.dtype.kind in "iu":
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_text(path, text: str) -> None:
    # newline="" keeps "\n" on every platform so outputs stay byte-identical
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
