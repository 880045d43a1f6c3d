"""Canonical JSON: sorted keys, ``%.12e`` floats, non-finite floats as strings."""

from __future__ import annotations

import json
import math

import numpy as np


def _canon(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return _Float(v)
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if hasattr(obj, "to_json"):
        return _canon(obj.to_json())
    return obj


class _Float(float):
    def __repr__(self):
        return "%.12e" % self


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # the C encoder ignores float subclasses, so use the pure-python path
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.py_encode_basestring_ascii, self.indent,
            lambda v: repr(v) if isinstance(v, _Float) else float.__repr__(v),
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys,
            _one_shot=False)(o, 0)


def canonical_json(obj):
    """Serialize ``obj`` deterministically for golden-file comparison."""
    return json.dumps(_canon(obj), cls=_Encoder, sort_keys=True, indent=2) + "\n"
