"""Experiment configuration: schema, defaults, canonical hashing.

A config file is JSON; omitted fields inherit the defaults below, unknown
keys are rejected by the schema.  Every artifact embeds the sha256 hash of
the fully-resolved config so outputs can be traced to their inputs.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema


class ConfigError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "master_seed": 21,
    "zoo": {
        "image_shape": [32, 32, 3],
        "embedding_dim": 64,
        "encoders": [
            {"name": "lin-a", "architecture": "LinearProject"},
            {"name": "lin-b", "architecture": "LinearProject"},
            {"name": "patch-a", "architecture": "PatchProject"},
            {"name": "conv-a", "architecture": "RandomConv"},
            {"name": "conv-b", "architecture": "RandomConv"},
            {"name": "fourier-a", "architecture": "FourierFeature"},
        ],
    },
    "dataset": {
        "generator": "Shapes",
        "classes": 10,
        "train_size": 2000,
        "test_size": 500,
    },
    "head": {
        "hidden_widths": [64, 64],
        "iterations": 800,
        "batch_size": 64,
        "learning_rate": 0.05,
        "momentum": 0.9,
    },
    "services": {"output_mode": "hard"},
    "attack": {
        "objectives_count": 4,
        "replicas": 3,
        "iterations": 60,
        "directions": 64,
        "radius": 0.5,
        "step_size": 0.05,
    },
    "inference": {
        "similarity": "indicator",
        "threshold": 1.7,
        "price_per_query": "0.0001",
    },
    "defense": {
        "target_service": "svc-lin-a",
        "quality": 30,
        "resize_to": [256, 256],
        "interpolation": "nearest",
    },
    "steal": {
        "target_service": "svc-lin-a",
        "wrong_candidate": "fourier-a",
        "surrogate_generator": "Textures",
        "surrogate_size": 3000,
        "iterations": 1200,
        "batch_size": 64,
        "learning_rate": 0.05,
        "momentum": 0.9,
    },
    "serve": {
        "host": "127.0.0.1",
        "port_base": 0,
        "price_per_query": "0.0001",
    },
}


def _obj(properties: dict, required: list[str] | None = None) -> dict:
    return {
        "type": "object",
        "properties": properties,
        "additionalProperties": False,
        **({"required": required} if required else {}),
    }


_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_PRICE = {"type": ["string", "number"], "pattern": r"^\d+(\.\d+)?$"}

SCHEMA: dict = _obj({
    "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "zoo": _obj({
        "image_shape": {"type": "array", "items": _POS_INT,
                        "minItems": 3, "maxItems": 3},
        "embedding_dim": {"type": "integer", "minimum": 2},
        "encoders": {
            "type": "array", "minItems": 1,
            "items": _obj({
                "name": {"type": "string", "minLength": 1},
                "architecture": {"enum": ["LinearProject", "PatchProject",
                                          "RandomConv", "FourierFeature"]},
            }, required=["name", "architecture"]),
        },
    }),
    "dataset": _obj({
        "generator": {"enum": ["Shapes", "Textures"]},
        "classes": {"type": "integer", "minimum": 2},
        "train_size": _POS_INT,
        "test_size": _POS_INT,
    }),
    "head": _obj({
        "hidden_widths": {"type": "array", "items": _POS_INT},
        "iterations": {"type": "integer", "minimum": 0},
        "batch_size": _POS_INT,
        "learning_rate": _POS_NUM,
        "momentum": {"type": "number", "minimum": 0, "maximum": 1},
    }),
    "services": _obj({
        "output_mode": {"enum": ["hard", "soft"]},
    }),
    "attack": _obj({
        "objectives_count": _POS_INT,
        "replicas": _POS_INT,
        "iterations": {"type": "integer", "minimum": 0},
        "directions": _POS_INT,
        "radius": _POS_NUM,
        "step_size": _POS_NUM,
    }),
    "inference": _obj({
        "similarity": {"enum": ["indicator"]},
        "threshold": {"type": "number"},
        "price_per_query": _PRICE,
    }),
    "defense": _obj({
        "target_service": {"type": "string"},
        "quality": {"type": "integer", "minimum": 1, "maximum": 100},
        "resize_to": {"type": "array", "items": _POS_INT,
                      "minItems": 2, "maxItems": 2},
        "interpolation": {"enum": ["nearest", "bilinear"]},
    }),
    "steal": _obj({
        "target_service": {"type": "string"},
        "wrong_candidate": {"type": "string"},
        "surrogate_generator": {"enum": ["Shapes", "Textures"]},
        "surrogate_size": _POS_INT,
        "iterations": {"type": "integer", "minimum": 0},
        "batch_size": _POS_INT,
        "learning_rate": _POS_NUM,
        "momentum": {"type": "number", "minimum": 0, "maximum": 1},
    }),
    "serve": _obj({
        "host": {"type": "string"},
        "port_base": {"type": "integer", "minimum": 0, "maximum": 65535},
        "price_per_query": _PRICE,
    }),
})


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(cfg: dict) -> dict:
    """Merge over defaults and validate; raises ConfigError naming the issue."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    merged = _deep_merge(DEFAULT_CONFIG, cfg)
    # a user-supplied encoder list replaces the default zoo outright
    if "zoo" in cfg and "encoders" in cfg.get("zoo", {}):
        merged["zoo"]["encoders"] = copy.deepcopy(cfg["zoo"]["encoders"])
    try:
        jsonschema.validate(merged, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"config error at {path}: {exc.message}") from None
    names = [e["name"] for e in merged["zoo"]["encoders"]]
    if len(set(names)) != len(names):
        raise ConfigError("zoo.encoders names must be unique")
    return merged


def load_config(path: str | Path | None) -> dict:
    """Load and validate a config file; None loads the defaults."""
    if path is None:
        return validate_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
