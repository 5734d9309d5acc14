"""JSON report assembly: every number travels with its provenance."""

from __future__ import annotations

import json
import math
from numbers import Number

import numpy as np

PROVENANCES = ("formula", "estimated", "fitted", "simulated")
VOLATILE_KEYS = ("timestamp",)


def _plain(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_plain(y) for y in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(y) for y in x]
    return x


def tag(value, provenance: str) -> dict:
    """Wrap a number (or a list of numbers) with its provenance."""
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}")
    return {"value": _plain(value), "provenance": provenance}


def tag_all(mapping: dict, provenance: str, skip=()) -> dict:
    """Tag every numeric entry of a flat mapping; strings, booleans and ``None`` pass through."""
    out = {}
    for k, v in mapping.items():
        if k in skip:
            continue
        if isinstance(v, bool) or v is None or isinstance(v, str):
            out[k] = v
        elif isinstance(v, dict):
            out[k] = tag_all(v, provenance)
        elif isinstance(v, (Number, np.number, list, tuple, np.ndarray)):
            out[k] = tag(v, provenance)
        else:
            out[k] = str(v)
    return out


def untagged_numbers(obj, path="") -> list:
    """Paths of numbers that are not inside a ``{"value", "provenance"}`` wrapper."""
    bad = []
    if isinstance(obj, dict):
        if set(obj) == {"value", "provenance"} and obj["provenance"] in PROVENANCES:
            return bad
        for k, v in obj.items():
            bad += untagged_numbers(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            bad += untagged_numbers(v, f"{path}[{i}]")
    elif isinstance(obj, Number) and not isinstance(obj, bool):
        bad.append(path or ".")
    return bad


def canonical(report: dict) -> dict:
    """Copy of ``report`` without volatile fields, for byte comparisons."""
    def strip(o):
        if isinstance(o, dict):
            return {k: strip(v) for k, v in o.items() if k not in VOLATILE_KEYS}
        if isinstance(o, list):
            return [strip(v) for v in o]
        return o
    return strip(report)


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
