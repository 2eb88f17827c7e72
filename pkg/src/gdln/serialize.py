"""Compact on-disk formats: bitset activation samples and JSON reports."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .relu import ActivationSample

#: 16-byte record header: 4-byte magic, then unit count, datapoint count and
#: epoch as little-endian uint32.
_MAGIC = b"GACT"
_HEADER = struct.Struct("<4sIII")


def save_activation_samples(samples, path) -> None:
    """Write activation samples as concatenated bitset records plus an index.

    Each record is the 16-byte header followed by the row-major packed bits
    of the H x N binary pattern.  The sidecar ``<path>.index.json`` stores
    byte offsets and provenance for random access.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = []
    with open(path, "wb") as fh:
        for s in samples:
            h, n = s.pattern.shape
            offset = fh.tell()
            fh.write(_HEADER.pack(_MAGIC, h, n, s.epoch))
            fh.write(np.packbits(s.pattern, axis=None).tobytes())
            index.append({
                "offset": offset,
                "rows": h,
                "cols": n,
                "epoch": s.epoch,
                "run_id": s.run_id,
                "layer": s.layer,
            })
    Path(str(path) + ".index.json").write_text(json.dumps(index, indent=2))


def load_activation_samples(path):
    path = Path(path)
    index = json.loads(Path(str(path) + ".index.json").read_text())
    samples = []
    with open(path, "rb") as fh:
        for rec in index:
            fh.seek(rec["offset"])
            magic, h, n, epoch = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != _MAGIC:
                raise InvalidParameterError(f"bad record magic at offset {rec['offset']}")
            nbytes = (h * n + 7) // 8
            bits = np.unpackbits(np.frombuffer(fh.read(nbytes), dtype=np.uint8))
            pattern = bits[: h * n].reshape(h, n)
            samples.append(ActivationSample(
                epoch=epoch, run_id=rec["run_id"], layer=rec["layer"], pattern=pattern,
            ))
    return samples


def write_report(path, payload) -> None:
    """Write a JSON report, converting numpy scalars/arrays along the way."""
    def convert(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [convert(v) for v in obj]
        return obj

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(convert(payload), indent=2))
