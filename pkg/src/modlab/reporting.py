"""JSON serialisation of report dataclasses (numpy-aware)."""
from __future__ import annotations

import dataclasses
import json
import math

import numpy as np


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if callable(obj):
        return getattr(obj, "__name__", repr(obj))
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(jsonable(obj), indent=kw.pop("indent", 2), sort_keys=kw.pop("sort_keys", True), **kw)
