"""
Preprocessed dataset cache.

A cache is two files sharing a prefix:

- ``<prefix>.manifest.json``: shape, modality, window length, overlap, the
  resolved config, seed, SHA-256 of the tensor blob, and one entry per
  window (gesture, subject, trial id, stage, window index);
- ``<prefix>.bin``: float64 little-endian, row-major [window, frame, dim].
"""
import json
import logging
import os
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.data.domain import Modality
from src.data.preprocess import WindowSet
from src.errors import DataError
from src.utils.hashing import sha256_array

_logger = logging.getLogger(__name__)

CACHE_FORMAT = "gazegest-windows v1"


def cache_paths(prefix: str) -> Tuple[str, str]:
    return f"{prefix}.manifest.json", f"{prefix}.bin"


def save_window_cache(windows: WindowSet, prefix: str, W: int, overlap: float,
                      config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> str:
    """
    Write a WindowSet to disk.

    Returns:
        The content hash of the tensor blob
    """
    manifest_path, blob_path = cache_paths(prefix)
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    data = np.ascontiguousarray(windows.X, dtype="<f8")
    content_hash = sha256_array(data)

    with open(blob_path, "wb") as f:
        f.write(data.tobytes())

    manifest = {
        "format": CACHE_FORMAT,
        "shape": list(data.shape),
        "modality": windows.modality.value if windows.modality else None,
        "window": W,
        "overlap": overlap,
        "config": config or {},
        "seed": seed,
        "sha256": content_hash,
        "windows": [
            {
                "gesture": int(windows.gesture[i]),
                "subject": str(windows.subject[i]),
                "trial_id": str(windows.trial_id[i]),
                "stage": int(windows.stage[i]),
                "window_index": int(windows.window_index[i]),
            }
            for i in range(len(windows))
        ],
    }
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    _logger.info("Cached %d windows to %s", len(windows), blob_path)
    return content_hash


def load_window_cache(prefix: str) -> Tuple[WindowSet, Dict[str, Any]]:
    """
    Read a cache written by save_window_cache, verifying the blob hash.

    Returns:
        (WindowSet, manifest dict)

    Raises:
        DataError: on a missing file, a shape mismatch or a hash mismatch
    """
    manifest_path, blob_path = cache_paths(prefix)
    if not (os.path.exists(manifest_path) and os.path.exists(blob_path)):
        raise DataError("window cache not found", where=prefix)
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != CACHE_FORMAT:
        raise DataError(f"unsupported cache format {manifest.get('format')!r}", where=manifest_path)

    shape = tuple(manifest["shape"])
    data = np.fromfile(blob_path, dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise DataError(f"blob holds {data.size} values, manifest expects shape {shape}", where=blob_path)
    X = data.reshape(shape).astype(np.float64)
    if sha256_array(X) != manifest["sha256"]:
        raise DataError("content hash mismatch", where=blob_path)

    entries = manifest["windows"]
    windows = WindowSet(
        X=X,
        gesture=np.array([e["gesture"] for e in entries], dtype=np.int64),
        subject=np.array([e["subject"] for e in entries], dtype=object),
        trial_id=np.array([e["trial_id"] for e in entries], dtype=object),
        stage=np.array([e["stage"] for e in entries], dtype=np.int64),
        window_index=np.array([e["window_index"] for e in entries], dtype=np.int64),
        modality=Modality(manifest["modality"]) if manifest["modality"] else None,
    )
    return windows, manifest
