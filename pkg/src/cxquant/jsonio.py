"""JSON encodings of measures, couplings and partitions.

Field names are fixed and unknown fields are rejected.  Validation failures
raise ``SchemaViolation`` carrying a JSON pointer to the offending value.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .measures import (
    Box,
    DiscreteCoupling,
    DiscreteMeasure,
    MeasureError,
    Partition,
    Remainder,
    VoronoiRegion,
    as_points,
)

_coords = {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": "number"}}
_bound = {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": ["number", "null"]}}
_closed = {"oneOf": [{"type": "boolean"}, {"type": "array", "items": {"type": "boolean"}}]}

MEASURE_SCHEMA = {
    "type": "object",
    "properties": {
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"x": _coords, "w": {"type": "number", "minimum": 0}},
                "required": ["x", "w"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["d", "atoms"],
    "additionalProperties": False,
}

COUPLING_SCHEMA = {
    "type": "object",
    "properties": {
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"x": _coords, "y": _coords, "w": {"type": "number", "minimum": 0}},
                "required": ["x", "y", "w"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["d", "atoms"],
    "additionalProperties": False,
}

_CELL_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "box"},
                "lower": _bound,
                "upper": _bound,
                "lower_closed": _closed,
                "upper_closed": _closed,
            },
            "required": ["kind", "lower", "upper"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "interval"},
                "a": {"type": ["number", "null"]},
                "b": {"type": ["number", "null"]},
                "left_closed": {"type": "boolean"},
                "right_closed": {"type": "boolean"},
            },
            "required": ["kind", "a", "b"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "voronoi"},
                "index": {"type": "integer", "minimum": 0},
                "sites": {"type": "array", "minItems": 1, "items": _coords},
            },
            "required": ["kind", "index", "sites"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "remainder"}},
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

PARTITION_SCHEMA = {
    "type": "object",
    "properties": {
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "cells": {"type": "array", "minItems": 1, "items": _CELL_SCHEMA},
    },
    "required": ["d", "cells"],
    "additionalProperties": False,
}

PARTITION_SEQUENCE_SCHEMA = {"type": "array", "items": PARTITION_SCHEMA}


class SchemaViolation(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _validate(doc, schema):
    validator = jsonschema.Draft202012Validator(schema)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise SchemaViolation(_pointer(error.absolute_path), error.message)


def _check_dims(doc, keys):
    d = doc["d"]
    for k, atom in enumerate(doc["atoms"]):
        for key in keys:
            if len(atom[key]) != d:
                raise SchemaViolation(f"/atoms/{k}/{key}", f"expected {d} coordinates, got {len(atom[key])}")


def measure_from_json(doc) -> DiscreteMeasure:
    _validate(doc, MEASURE_SCHEMA)
    _check_dims(doc, ("x",))
    pts = np.array([a["x"] for a in doc["atoms"]], dtype=float)
    w = np.array([a["w"] for a in doc["atoms"]], dtype=float)
    try:
        return DiscreteMeasure(pts, w)
    except MeasureError as exc:
        raise SchemaViolation("/atoms", str(exc)) from exc


def measure_to_json(mu: DiscreteMeasure) -> dict:
    return {"d": mu.d, "atoms": [{"x": p.tolist(), "w": float(w)} for p, w in zip(mu.points, mu.weights)]}


def coupling_from_json(doc) -> DiscreteCoupling:
    _validate(doc, COUPLING_SCHEMA)
    _check_dims(doc, ("x", "y"))
    x = np.array([a["x"] for a in doc["atoms"]], dtype=float)
    y = np.array([a["y"] for a in doc["atoms"]], dtype=float)
    w = np.array([a["w"] for a in doc["atoms"]], dtype=float)
    try:
        return DiscreteCoupling(x, y, w)
    except MeasureError as exc:
        raise SchemaViolation("/atoms", str(exc)) from exc


def coupling_to_json(pi: DiscreteCoupling) -> dict:
    return {
        "d": pi.d,
        "atoms": [
            {"x": x.tolist(), "y": y.tolist(), "w": float(w)} for x, y, w in zip(pi.x, pi.y, pi.weights)
        ],
    }


def _inf(v, default):
    return default if v is None else float(v)


def _cell_from_json(cell, d: int, where: str):
    kind = cell["kind"]
    if kind == "remainder":
        return Remainder()
    if kind == "interval":
        if d != 1:
            raise SchemaViolation(where, "interval cells need d = 1")
        return Box(
            [_inf(cell["a"], -np.inf)],
            [_inf(cell["b"], np.inf)],
            cell.get("left_closed", True),
            cell.get("right_closed", False),
        )
    if kind == "box":
        if len(cell["lower"]) != d or len(cell["upper"]) != d:
            raise SchemaViolation(where, f"box bounds need {d} entries")
        return Box(
            [_inf(v, -np.inf) for v in cell["lower"]],
            [_inf(v, np.inf) for v in cell["upper"]],
            cell.get("lower_closed", True),
            cell.get("upper_closed", False),
        )
    sites = as_points(np.array(cell["sites"], dtype=float))
    if sites.shape[1] != d:
        raise SchemaViolation(where + "/sites", f"sites need {d} coordinates")
    if cell["index"] >= len(sites):
        raise SchemaViolation(where + "/index", "index out of range")
    sites.flags.writeable = False
    return VoronoiRegion(cell["index"], sites)


def partition_from_json(doc, _prefix: str = "") -> Partition:
    try:
        _validate(doc, PARTITION_SCHEMA)
    except SchemaViolation as exc:
        raise SchemaViolation(_prefix + exc.pointer.rstrip("/"), str(exc).split(": ", 1)[1]) from None
    d = doc["d"]
    cells = [_cell_from_json(c, d, f"{_prefix}/cells/{k}") for k, c in enumerate(doc["cells"])]
    try:
        return Partition(cells, d)
    except MeasureError as exc:
        raise SchemaViolation(_prefix + "/cells", str(exc)) from exc


def partition_to_json(part: Partition) -> dict:
    return part.to_json()


def partitions_from_json(doc) -> list[Partition]:
    """A JSON array of partitions (a partition sequence)."""
    if not isinstance(doc, list):
        raise SchemaViolation("/", "expected an array of partitions")
    return [partition_from_json(p, f"/{k}") for k, p in enumerate(doc)]


def load_json(path) -> object:
    with open(path) as fh:
        return json.load(fh)


def dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
