"""Versioned binary checkpoint container for fusion models.

Layout (all integers little-endian uint32):

    8 bytes   magic "IHDRCKPT"
    4 bytes   format version (currently 1)
    4 bytes   length of the JSON config block
    N bytes   JSON: architecture config + ordered parameter manifest
    M bytes   little-endian float32 parameter payload, manifest order
    4 bytes   CRC32 of everything above
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ihdr.images import DataError, _atomic_write_bytes
from ihdr.fusion.network import FusionConfig, FusionModel

MAGIC = b"IHDRCKPT"
FORMAT_VERSION = 1


def save_model(model: FusionModel, path):
    """Serialize config and parameters; parameters are stored as float32."""
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()]
    config_block = json.dumps(
        {"config": model.config.to_json(), "params": manifest}, sort_keys=True
    ).encode()
    payload = model.flat_params().astype("<f4").tobytes()
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(config_block)) + config_block + payload
    _atomic_write_bytes(path, body + struct.pack("<I", zlib.crc32(body)))


def load_model(path) -> FusionModel:
    """Read and verify a checkpoint; raises DataError on any corruption."""
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"not a model checkpoint (bad magic): {path}")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise DataError(f"checkpoint checksum mismatch: {path}")
    version, config_len = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format version {version}")
    header = json.loads(raw[16 : 16 + config_len])
    config = FusionConfig.from_json(header["config"])
    payload = np.frombuffer(raw[16 + config_len : -4], dtype="<f4").astype(np.float64)

    params = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        params[entry["name"]] = payload[offset : offset + size].reshape(shape)
        offset += size
    if offset != payload.size:
        raise DataError(f"checkpoint payload has {payload.size} values, manifest expects {offset}")
    return FusionModel(config=config, params=params)
