"""Parameter checkpoints: path -> (shape, row-major float64 values).

Two encodings share one logical schema:

* ``.json`` -- ``{"meta": {...}, "params": {path: {"shape": [...], "data": [...]}}}``
* anything else -- binary: magic, little-endian u64 header length, a JSON
  header (meta plus path/shape/offset table), then raw ``<f8`` values in
  header order. No timestamps, so identical parameters give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"MMERCKP1"


def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray],
                    meta: Mapping[str, Any] | None = None) -> None:
    path = Path(path)
    names = sorted(params)
    meta = dict(meta or {})
    if path.suffix == ".json":
        payload = {
            "meta": meta,
            "params": {k: {"shape": list(params[k].shape),
                           "data": np.asarray(params[k], dtype=np.float64).ravel().tolist()}
                       for k in names},
        }
        path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        return
    table, offset = [], 0
    for k in names:
        n = int(np.asarray(params[k]).size)
        table.append({"path": k, "shape": list(np.shape(params[k])), "offset": offset})
        offset += n
    header = json.dumps({"meta": meta, "params": table}, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for k in names:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a checkpoint file") from exc
        params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in payload["params"].items()}
        return params, payload.get("meta", {})
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(raw[start:start + hlen].decode("utf-8"))
    values = np.frombuffer(raw, dtype="<f8", offset=start + hlen)
    params = {}
    for entry in header["params"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = values[entry["offset"]:entry["offset"] + n]
        params[entry["path"]] = chunk.astype(np.float64).reshape(entry["shape"])
    return params, header.get("meta", {})
