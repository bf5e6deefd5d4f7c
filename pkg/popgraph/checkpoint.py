"""
Parameter checkpoints.

A checkpoint is a JSON document::

    {"format": "popgraph.checkpoint", "version": 1,
     "metadata": {...},
     "arrays": {"conv.weight": {"shape": [68, 512], "values": [...]}, ...}}

Values are row-major and written with Python's shortest round-trip float
repr, so loading a saved checkpoint reproduces every array bit for bit.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from popgraph.errors import DataError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "popgraph.checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Union[str, Path],
    params: Mapping[str, np.ndarray],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write named arrays plus metadata.

    Array names are stored sorted so identical parameters give identical files.

    Raises:
        DataError: If the file cannot be written
    """
    path = Path(path)
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": dict(metadata or {}),
        "arrays": {
            name: {
                "shape": list(np.shape(params[name])),
                "values": np.asarray(params[name], dtype=np.float64).reshape(-1).tolist(),
            }
            for name in sorted(params)
        },
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(document, f, sort_keys=True)
    except OSError as e:
        logger.error(f"[Checkpoint] Failed to save {path}: {e}")
        raise DataError(f"cannot write checkpoint '{path}': {e}") from e
    logger.info(f"[Checkpoint] Saved {len(params)} arrays to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        (arrays by name, metadata)

    Raises:
        DataError: On unreadable files, unknown formats or inconsistent shapes
    """
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read checkpoint '{path}': {e}") from e

    if document.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"'{path}' is not a checkpoint (format={document.get('format')!r})")
    if document.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {document.get('version')!r} in '{path}'")

    arrays: Dict[str, np.ndarray] = {}
    for name, entry in document.get("arrays", {}).items():
        shape = tuple(int(s) for s in entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise DataError(f"checkpoint array '{name}' has {values.size} values for shape {shape}")
        arrays[name] = values.reshape(shape)

    logger.info(f"[Checkpoint] Loaded {len(arrays)} arrays from {path}")
    return arrays, document.get("metadata", {})
