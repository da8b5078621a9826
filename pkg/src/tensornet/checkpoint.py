"""
Checkpoint Module

A checkpoint is a manifest (``<prefix>.manifest.json``: layer specs,
parameter names and shapes, model spec, seed, content hash) plus a flat
parameter blob (``<prefix>.bin``: float64 little-endian, parameters
concatenated in registry order).
"""
import json
import logging
import os
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import DataError
from src.tensornet.graph import ModelGraph
from src.utils.hashing import sha256_bytes

_logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gazegest-checkpoint v1"


def checkpoint_paths(prefix: str) -> Tuple[str, str]:
    return f"{prefix}.manifest.json", f"{prefix}.bin"


def _blob(graph: ModelGraph) -> bytes:
    return b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in graph.parameters())


def save_checkpoint(graph: ModelGraph, prefix: str, seed: Optional[int] = None,
                    extra: Optional[Dict[str, Any]] = None) -> str:
    """
    Write graph parameters to disk.

    Returns:
        SHA-256 of the parameter blob
    """
    manifest_path, blob_path = checkpoint_paths(prefix)
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    blob = _blob(graph)
    content_hash = sha256_bytes(blob)
    with open(blob_path, "wb") as f:
        f.write(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "num_classes": graph.num_classes,
        "spec": graph.spec,
        "layers": graph.layer_specs(),
        "parameters": [{"name": p.name, "shape": list(p.shape)} for p in graph.parameters()],
        "parameter_count": graph.parameter_count,
        "seed": seed,
        "sha256": content_hash,
        "extra": extra or {},
    }
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    _logger.info("Saved %s (%d parameters) to %s", graph.name, graph.parameter_count, blob_path)
    return content_hash


def read_checkpoint_manifest(prefix: str) -> Dict[str, Any]:
    manifest_path, _ = checkpoint_paths(prefix)
    if not os.path.exists(manifest_path):
        raise DataError("checkpoint manifest not found", where=manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"unsupported checkpoint format {manifest.get('format')!r}", where=manifest_path)
    return manifest


def load_checkpoint(prefix: str, graph: ModelGraph) -> Dict[str, Any]:
    """
    Load parameters saved by save_checkpoint into a graph of the same layout.

    Returns:
        The manifest

    Raises:
        DataError: on a hash mismatch or a parameter layout mismatch
    """
    manifest = read_checkpoint_manifest(prefix)
    _, blob_path = checkpoint_paths(prefix)
    with open(blob_path, "rb") as f:
        blob = f.read()
    if sha256_bytes(blob) != manifest["sha256"]:
        raise DataError("content hash mismatch", where=blob_path)

    expected = [(p.name, list(p.shape)) for p in graph.parameters()]
    stored = [(entry["name"], entry["shape"]) for entry in manifest["parameters"]]
    if expected != stored:
        raise DataError(f"checkpoint layout does not match graph {graph.name}", where=prefix)

    values = np.frombuffer(blob, dtype="<f8")
    if values.size != graph.parameter_count:
        raise DataError(f"blob holds {values.size} values, graph needs {graph.parameter_count}", where=blob_path)
    offset = 0
    for p in graph.parameters():
        p.value[...] = values[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return manifest
