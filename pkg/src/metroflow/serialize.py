"""Binary container for named float64 arrays.

Layout: one line of canonical JSON (sorted keys, no extra whitespace)
terminated by a newline, followed by the concatenated little-endian f64
payloads.  The header lists every entry's name, shape and byte offset into
the payload, so the format is self-describing and round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import SchemaError

FORMAT = "metroflow-blob"
VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    """Stable sha256 hex digest of a JSON-serializable object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def write_blob(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    offset = 0
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    header = {"format": FORMAT, "version": VERSION, "meta": meta, "entries": entries}
    with open(path, "wb") as fh:
        fh.write(canonical_json(header).encode("utf-8"))
        fh.write(b"\n")
        for raw in payloads:
            fh.write(raw)


def read_blob(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path} is not a metroflow blob: bad header ({exc})") from exc
    if header.get("format") != FORMAT:
        raise SchemaError(f"{path} has format {header.get('format')!r}, expected {FORMAT!r}")
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, header["meta"]
