"""
RSPK1 tensor container.

Layout: b"RSPK1" | uint32 little-endian header length | UTF-8 JSON header |
row-major float32 little-endian payloads, in header entry order.
The header lists each entry's name, kind, ndim, dims and byte offset
(relative to the payload start) and carries free-form metadata.
"""

import json
import logging
import os
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from src.utils.errors import FeatureStoreError

logger = logging.getLogger(__name__)

MAGIC = b"RSPK1"
_DTYPE = np.dtype("<f4")


def write_container(
    path: Union[str, Path],
    entries: Mapping[str, np.ndarray],
    metadata: Optional[Dict[str, Any]] = None,
    kinds: Optional[Mapping[str, str]] = None,
) -> Path:
    """Write named arrays and metadata; the file is replaced atomically"""
    path = Path(path)
    kinds = kinds or {}
    header_entries = []
    payloads = []
    offset = 0
    for name, array in entries.items():
        data = np.ascontiguousarray(np.asarray(array, dtype=_DTYPE))
        header_entries.append(
            {
                "name": name,
                "kind": kinds.get(name, "tensor"),
                "ndim": int(data.ndim),
                "dims": [int(d) for d in data.shape],
                "offset": offset,
            }
        )
        payloads.append(data.tobytes(order="C"))
        offset += data.nbytes

    header = {
        "magic": MAGIC.decode(),
        "dtype": "f32",
        "endian": "little",
        "entries": header_entries,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header_bytes)))
            fh.write(header_bytes)
            for chunk in payloads:
                fh.write(chunk)
        os.replace(tmp, path)
    except OSError as e:
        raise FeatureStoreError(f"Cannot write {path}: {e}") from e
    return path


def read_container(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Return ({name: float32 array}, header) for an RSPK1 file"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FeatureStoreError(f"Cannot read {path}: {e}") from e

    if raw[: len(MAGIC)] != MAGIC:
        raise FeatureStoreError(f"{path} is not an RSPK1 container")
    start = len(MAGIC)
    try:
        (header_len,) = struct.unpack("<I", raw[start : start + 4])
        header = json.loads(raw[start + 4 : start + 4 + header_len].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FeatureStoreError(f"{path}: corrupt header ({e})") from e

    if header.get("dtype") != "f32" or header.get("endian") != "little":
        raise FeatureStoreError(f"{path}: unsupported dtype {header.get('dtype')}/{header.get('endian')}")

    payload = memoryview(raw)[start + 4 + header_len :]
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        dims = tuple(entry["dims"])
        count = int(np.prod(dims)) if dims else 1
        begin = entry["offset"]
        end = begin + count * _DTYPE.itemsize
        if end > len(payload):
            raise FeatureStoreError(f"{path}: entry {entry['name']} is truncated")
        arrays[entry["name"]] = np.frombuffer(payload[begin:end], dtype=_DTYPE).reshape(dims).copy()
    return arrays, header
