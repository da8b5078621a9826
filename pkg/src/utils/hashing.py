"""
Content hashing for data artifacts (logs, caches, checkpoints, reports).
"""
import hashlib
import json
from typing import Any, Iterable, Union

import numpy as np


def sha256_bytes(payload: Union[bytes, Iterable[bytes]]) -> str:
    """Hex SHA-256 of a byte string or of a sequence of byte chunks."""
    digest = hashlib.sha256()
    if isinstance(payload, (bytes, bytearray)):
        digest.update(payload)
    else:
        for chunk in payload:
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def sha256_array(array: np.ndarray) -> str:
    """Hash of an array's little-endian float64 row-major bytes."""
    return sha256_bytes(np.ascontiguousarray(array, dtype="<f8").tobytes())


def canonical_json(obj: Any) -> str:
    """Stable JSON rendering used wherever a config is embedded and hashed."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
