"""Run manifest: JSON schema, serialization helpers and validation."""

from __future__ import annotations

import json
import math

import jsonschema
import numpy as np

__all__ = ["FORMAT_VERSION", "SCHEMA", "to_jsonable", "validate_manifest", "write_manifest", "read_manifest"]

FORMAT_VERSION = "1.0"

_num = {"type": ["number", "null"]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gceigen run manifest",
    "type": "object",
    "required": ["format_version", "command", "status", "exit_code", "seed", "config", "problem", "timings"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "command": {"enum": ["validate", "solve", "certify", "oracle"]},
        "status": {"enum": ["ok", "validation_failed", "not_converged", "check_failed", "error"]},
        "exit_code": {"enum": [0, 2, 3, 4]},
        "seed": {"type": "integer"},
        "config": {"type": "object"},
        "problem": {"type": "object", "required": ["name", "n"]},
        "validation": {"type": "object"},
        "grid": {"type": "object", "required": ["n", "lo", "hi", "m", "h"]},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "lambda_star": _num,
        "delta_trace": {
            "type": "array",
            "items": {"type": "array", "prefixItems": [{"type": "number"}, {"type": "number"}],
                      "minItems": 2, "maxItems": 2},
        },
        "converged": {"type": "boolean"},
        "contact_fraction": _num,
        "residuals": {"type": "object"},
        "apriori": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "structural": {"type": "object"},
        "certificates": {"type": "object"},
        "oracle": {"type": "object"},
        "checks": {"type": "object"},
        "error": {"type": "string"},
        "timings": {"type": "object", "additionalProperties": {"type": "number"}},
    },
    "additionalProperties": False,
}


def to_jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def validate_manifest(doc):
    jsonschema.validate(doc, SCHEMA)


def write_manifest(doc, path):
    doc = to_jsonable(doc)
    validate_manifest(doc)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    validate_manifest(doc)
    return doc
