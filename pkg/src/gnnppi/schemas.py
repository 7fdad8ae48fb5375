"""JSON schemas for every file the command line writes."""

from __future__ import annotations

import jsonschema

from .data import LABELS

_NUM = {"type": "number"}
_PROP = {"type": "number", "minimum": 0, "maximum": 1}
_STRATA_KEYS = ["BS", "ES", "NS"]

DATASET = {
    "type": "object",
    "required": ["proteins", "edges"],
    "properties": {
        "proteins": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "properties": {"id": {"type": "string"}, "sequence": {"type": "string"}},
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "labels"],
                "properties": {
                    "a": {"type": "integer", "minimum": 0},
                    "b": {"type": "integer", "minimum": 0},
                    "labels": {"type": "array", "minItems": 1, "items": {"enum": list(LABELS)}},
                },
            },
        },
    },
}

SUMMARY = {
    "type": "object",
    "required": ["n", "M", "with_sequence", "label_histogram"],
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "M": {"type": "integer", "minimum": 0},
        "with_sequence": {"type": "integer", "minimum": 0},
        "label_histogram": {"type": "object", "additionalProperties": {"type": "integer"}},
    },
}

MANIFEST = {
    "type": "object",
    "required": ["scheme", "seed", "t", "test_fraction", "root_ids", "test_edge_ids", "strata"],
    "properties": {
        "scheme": {"enum": ["random", "bfs", "dfs"]},
        "seed": {"type": "integer"},
        "t": {"type": "integer", "minimum": 1},
        "test_fraction": _PROP,
        "root_ids": {"type": "array", "items": {"type": "string"}},
        "test_edge_ids": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "strata": {
            "type": "object",
            "required": _STRATA_KEYS,
            "properties": {k: {"type": "array", "items": {"type": "integer"}} for k in _STRATA_KEYS},
        },
    },
}

COROLLARY = {
    "type": "object",
    "required": ["n", "test_fraction", "trials", "bs_mean", "bs_std", "train_connectivity_rate", "threshold"],
    "properties": {
        "n": {"type": "integer", "minimum": 2},
        "m": {"type": ["integer", "null"]},
        "p": {"type": ["number", "null"]},
        "bs_mean": _PROP,
        "bs_std": _NUM,
        "train_connectivity_rate": _PROP,
        "threshold": _NUM,
        "trials": {"type": "array", "minItems": 1},
    },
}

REPORT = {
    "type": "object",
    "required": ["micro_f1", "per_type_f1", "strata_f1", "strata_proportions", "counts", "threshold", "n_edges"],
    "properties": {
        "micro_f1": _PROP,
        "per_type_f1": {"type": "object", "required": list(LABELS), "additionalProperties": _PROP},
        "per_type_absent": {"type": "array", "items": {"enum": list(LABELS)}},
        "strata_f1": {
            "type": "object",
            "required": ["Avg"],
            "propertyNames": {"enum": _STRATA_KEYS + ["Avg"]},
            "additionalProperties": _PROP,
        },
        "strata_proportions": {"type": "object", "additionalProperties": _PROP},
        "counts": {"type": "object", "required": ["tp", "fp", "fn"]},
        "n_edges": {"type": "integer", "minimum": 1},
    },
}

TRAIN_RESULT = {
    "type": "object",
    "required": ["epoch", "best_train_f1", "history", "config", "format"],
    "properties": {
        "epoch": {"type": "integer", "minimum": 1},
        "best_train_f1": _PROP,
        "history": {
            "type": "array",
            "items": {"type": "object", "required": ["epoch", "lr", "loss", "train_f1"]},
        },
    },
}

AGGREGATE = {
    "type": "object",
    "required": ["runs", "metrics"],
    "properties": {
        "runs": {"type": "integer", "minimum": 1},
        "metrics": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean", "std", "n"],
                "properties": {"mean": _NUM, "std": _NUM, "n": {"type": "integer"}},
            },
        },
    },
}


def validate(document, schema) -> None:
    """Raise jsonschema.ValidationError when ``document`` does not match."""
    jsonschema.validate(document, schema)
