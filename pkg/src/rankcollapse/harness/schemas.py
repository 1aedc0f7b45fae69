"""JSON Schemas (draft 2020-12) for every JSON document the CLI writes."""

from __future__ import annotations

_NUM_OR_NULL = {"type": ["number", "null"]}

_PROVENANCE = {
    "command": {"type": "string"},
    "version": {"type": "string", "minLength": 1},
    "timestamp": {"type": "string"},
    "config": {"type": "object"},
}

_CELL_SUMMARY = {
    "type": "object",
    "required": ["T", "initial_mu", "final_mu", "log_slope_mu", "final_rank"],
    "properties": {
        "T": {"type": "integer", "minimum": 0},
        "initial_mu": {"type": "number", "minimum": 0},
        "final_mu": {"type": "number", "minimum": 0},
        "log_slope_mu": _NUM_OR_NULL,
        "final_rank": {"type": "integer", "minimum": 0},
        "final_stable_rank": _NUM_OR_NULL,
        "final_sigma2_over_sigma1": {"type": "number"},
        "min_eps_layer": _NUM_OR_NULL,
        "a3_ok": {"type": "boolean"},
    },
}

_CELL = {
    "type": "object",
    "required": ["mask", "d_qk", "mode", "seed", "status"],
    "properties": {
        "mask": {"type": "string"},
        "d_qk": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["san", "post_ln", "pre_ln"]},
        "seed": {"type": "integer", "minimum": 0},
        "status": {"enum": ["ok", "failed"]},
        "csv": {"type": ["string", "null"]},
        "summary": _CELL_SUMMARY,
        "error": {"type": "string"},
    },
    "if": {"properties": {"status": {"const": "failed"}}},
    "then": {"required": ["error"]},
    "else": {"required": ["summary"]},
}

BOUND_REPORT = {
    "type": "object",
    "required": ["theorem", "epsilon", "radius", "factor", "violations", "pass"],
    "properties": {
        "theorem": {"enum": ["1", "2", "cor1"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "integer", "minimum": 1},
        "factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "blocks_measured": {"type": "integer", "minimum": 0},
        "worst_measured": _NUM_OR_NULL,
        "violations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["step", "measured", "allowed"],
                "properties": {
                    "step": {"type": "integer"},
                    "measured": _NUM_OR_NULL,
                    "allowed": {"type": "number"},
                },
            },
        },
        "notes": {"type": "array", "items": {"type": "string"}},
        "pass": {"type": "boolean"},
        "seed": {"type": "integer"},
    },
}

EQUILIBRIUM_REPORT = {
    "type": "object",
    "required": ["theorem", "k", "variants", "max_residual", "ranks", "violations", "pass"],
    "properties": {
        "theorem": {"const": "3"},
        "k": {"type": "integer", "minimum": 1},
        "variants": {"type": "integer", "minimum": 1},
        "max_residual": {"type": "number", "minimum": 0},
        "ranks": {"type": "array", "items": {"type": "integer"}},
        "violations": {"type": "array"},
        "pass": {"type": "boolean"},
    },
}

VERIFY_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "verify_summary",
    "type": "object",
    "required": ["schema", "theorem", "reports", "pass", "version", "timestamp", "config"],
    "properties": {
        **_PROVENANCE,
        "schema": {"const": "verify_summary"},
        "theorem": {"enum": ["1", "2", "cor1", "3"]},
        "reports": {"type": "array", "minItems": 1,
                    "items": {"anyOf": [BOUND_REPORT, EQUILIBRIUM_REPORT]}},
        "pass": {"type": "boolean"},
    },
}

RUN_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "run_summary",
    "type": "object",
    "required": ["schema", "runs", "ok", "version", "timestamp", "config"],
    "properties": {
        **_PROVENANCE,
        "schema": {"const": "run_summary"},
        "runs": {"type": "array", "minItems": 1, "items": _CELL},
        "ok": {"type": "boolean"},
        "verification": {"type": "object"},
    },
}

SWEEP_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sweep_summary",
    "type": "object",
    "required": ["schema", "axes", "cells", "failed", "aggregate_csv", "version", "timestamp", "config"],
    "properties": {
        **_PROVENANCE,
        "schema": {"const": "sweep_summary"},
        "axes": {
            "type": "object",
            "required": ["mask", "d_qk", "mode", "seed"],
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "cells": {"type": "array", "minItems": 1, "items": _CELL},
        "failed": {"type": "integer", "minimum": 0},
        "aggregate_csv": {"type": "string"},
    },
}

MASK_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mask_summary",
    "type": "object",
    "required": ["n", "has_self_loops", "strongly_connected", "quasi_strongly_connected",
                 "center_nodes", "radius", "diameter"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "has_self_loops": {"type": "boolean"},
        "strongly_connected": {"type": "boolean"},
        "quasi_strongly_connected": {"type": "boolean"},
        "center_nodes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "radius": {"type": ["integer", "null"], "minimum": 0},
        "diameter": {"type": ["integer", "null"], "minimum": 0},
    },
}

EQUILIBRIUM = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "equilibrium",
    "type": "object",
    "required": ["schema", "n", "d", "k", "w", "signs", "residual", "rank", "stable_rank",
                 "stable_rank_bound", "unit_rows", "version", "timestamp"],
    "properties": {
        "schema": {"const": "equilibrium"},
        "n": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "w": {"type": "number", "exclusiveMinimum": 1},
        "signs": {"type": "array", "items": {"enum": [1, -1]}},
        "residual": {"type": "number", "minimum": 0},
        "rank": {"type": "integer", "minimum": 1},
        "stable_rank": {"type": "number", "minimum": 1},
        "stable_rank_bound": _NUM_OR_NULL,
        "unit_rows": {"type": "boolean"},
        "csv": {"type": "string"},
        "version": {"type": "string"},
        "timestamp": {"type": "string"},
    },
}

SCHEMAS = {
    "run_summary": RUN_SUMMARY,
    "sweep_summary": SWEEP_SUMMARY,
    "verify_summary": VERIFY_SUMMARY,
    "mask_summary": MASK_SUMMARY,
    "equilibrium": EQUILIBRIUM,
}
