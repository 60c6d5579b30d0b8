"""Adaptive graph-structure forecaster on a synthetic advection benchmark."""

import json as _json

from . import _core
from ._core import (
    CheckpointError,
    ConfigError,
    DatasetParseError,
    gumbel_softmax_sample,
    haversine_km,
    integer_degree,
    load_checkpoint,
    metrics,
    normalize_adjacency,
    radius_edges,
    read_dataset,
    stratify,
    variability_index,
)

variables = _core.variables


def default_config():
    """Every config key with its default value."""
    return _json.loads(_core.default_config())


def generate_dataset(config=None):
    """Simulate a dataset in memory from a run-config dict."""
    return _core.generate_dataset(_json.dumps(config or {}))


def simulate_to(out, config=None):
    """Simulate and write a dataset directory the CLI can read."""
    _core.simulate_to(_json.dumps(config or {}), str(out))


def train(data, config=None):
    """Fit on a dataset directory; returns (curve, best_epoch, diverged)."""
    return _core.train(str(data), _json.dumps(config or {}))


__all__ = [
    "CheckpointError",
    "ConfigError",
    "DatasetParseError",
    "default_config",
    "generate_dataset",
    "gumbel_softmax_sample",
    "haversine_km",
    "integer_degree",
    "load_checkpoint",
    "metrics",
    "normalize_adjacency",
    "radius_edges",
    "read_dataset",
    "simulate_to",
    "stratify",
    "train",
    "variability_index",
    "variables",
]
