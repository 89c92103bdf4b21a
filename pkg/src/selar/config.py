"""Run configuration: JSON schema validation plus default resolution.

A config describes one experiment: dataset, primary task, encoder,
training scheme, auxiliary tasks, and the seeds to run. Validation
errors name the offending field so a typo in `scheme` fails loudly
before any work starts.
"""

from __future__ import annotations

import copy
import json

import jsonschema

from .engine import SCHEMES
from .exceptions import ConfigError
from .trainer import AUX_NAMES, PRIMARY_KINDS

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "scheme", "seeds", "out_dir"],
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "synthetic": {
                    "type": "object",
                    "required": ["node_types", "edge_types"],
                    "properties": {"seed": {"type": "integer"}},
                },
                "files": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["nodes", "edges"],
                    "properties": {
                        "nodes": {"type": "string"},
                        "edges": {"type": "string"},
                        "labels": {"type": "string"},
                    },
                },
            },
        },
        "primary": {"enum": list(PRIMARY_KINDS)},
        "target_edge_type": {"type": "string"},
        "scheme": {"enum": list(SCHEMES)},
        "aux": {"type": "array", "items": {"enum": list(AUX_NAMES)}},
        "encoder": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gcn", "sgc", "gin", "gat"]},
                "layers": {"type": "integer", "minimum": 1},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "out_dim": {"type": "integer", "minimum": 1},
                "sgc_hops": {"type": "integer", "minimum": 0},
                "fanout": {"type": "integer", "minimum": 1},
                "gin_eps": {"type": "number"},
            },
        },
        "selar": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr_inner": {"type": "number", "exclusiveMinimum": 0},
                "lr_meta": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "meta_folds": {"type": "integer", "minimum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "steps_per_epoch": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "neg_ratio": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "split_ratios": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 3,
                    "maxItems": 3,
                },
                "scorer": {"enum": ["dot", "bilinear"]},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "negatives": {"type": "integer", "minimum": 1},
                "ks": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
        },
        "aux_params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pair_examples": {"type": "integer", "minimum": 2},
                "metapath_max_len": {"type": "integer", "minimum": 1},
                "max_metapaths": {"type": "integer", "minimum": 1},
                "node_frac": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "distance_pairs": {"type": "integer", "minimum": 2},
                "cluster_k": {"type": "integer", "minimum": 2},
                "partition_k": {"type": "integer", "minimum": 2},
            },
        },
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "out_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "primary": "link-prediction",
    "aux": ["metapath"],
    "encoder": {"kind": "gcn", "layers": 2, "hidden_dim": 16, "out_dim": 16,
                "sgc_hops": 2, "fanout": 8, "gin_eps": 0.0},
    "selar": {"lr_inner": 1e-2, "lr_meta": 1e-3, "gamma": 0.5, "meta_folds": 3},
    "train": {"epochs": 5, "steps_per_epoch": 20, "batch_size": 32, "neg_ratio": 1,
              "lr": 1e-2, "split_ratios": [0.6, 0.2, 0.2], "scorer": "dot"},
    "eval": {"negatives": 50, "ks": [5, 10]},
    "aux_params": {"pair_examples": 400, "metapath_max_len": 3, "max_metapaths": 3,
                   "node_frac": 0.5, "cluster_k": 4, "partition_k": 2},
}


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, RUN_SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
        raise ConfigError(f"config error at {where}: {err.message}") from err
    # gamma controls hint mixing only; silently accepting it elsewhere
    # would hide a misconfigured experiment
    if cfg.get("scheme") != "selar-hint" and "gamma" in cfg.get("selar", {}):
        raise ConfigError("config error at selar/gamma: gamma applies to the selar-hint scheme only")


def resolve_defaults(cfg: dict) -> dict:
    """Deep-merge user fields over DEFAULTS; input is not mutated."""
    out = copy.deepcopy(cfg)
    for key, value in DEFAULTS.items():
        if isinstance(value, dict):
            merged = dict(value)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, copy.deepcopy(value))
    # keep the resolved config valid under its own invariants
    if out.get("scheme") != "selar-hint":
        out["selar"].pop("gamma", None)
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {path}: {err}") from err
    validate_config(cfg)
    return resolve_defaults(cfg)
