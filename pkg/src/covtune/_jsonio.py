"""Deterministic JSON emission for traces, events and summaries.

Floats are rendered with 17 significant digits so that serialised state
round-trips exactly and replays are byte-identical; the standard library
encoder is bypassed because it formats floats with the shortest repr.
"""

from __future__ import annotations

import json
import math

__all__ = ["format_float", "dumps", "loads"]


def format_float(v: float) -> str:
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        raise ValueError(f"non-finite value {v!r} cannot be serialised")
    s = format(v, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def dumps(obj) -> str:
    """Serialise to JSON with deterministic float formatting.

    Dict insertion order is preserved; no whitespace is emitted.
    """
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    try:
        import numpy as np

        if isinstance(obj, np.integer):
            return str(int(obj))
        if isinstance(obj, np.floating):
            return format_float(float(obj))
        if isinstance(obj, np.ndarray):
            return dumps(obj.tolist())
    except ImportError:  # pragma: no cover
        pass
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def loads(s: str):
    return json.loads(s)
