"""Collects one verdict line per acceptance criterion."""
from __future__ import annotations

RESULTS: dict[int, str] = {}


def record(number: int, ok: bool, text: str) -> bool:
    RESULTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
    print(RESULTS[number])
    return ok
