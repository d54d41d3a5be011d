"""Checkpoint container: magic header, JSON metadata, raw parameter block
and a sha256 integrity trailer. Save -> load -> save is byte-identical."""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import FeatureCodec
from .errors import CheckpointIntegrityError, CheckpointVersionError, CheckpointError
from .model import MiracleConfig, MiracleModel, TrainHistory
from .remarks import RemarkChannel

MAGIC = b"MIRCKPT\x00"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: MiracleConfig
    codec: FeatureCodec
    params: dict[str, np.ndarray]
    projection_checksum: str
    history: list[dict]

    @classmethod
    def from_model(cls, model: MiracleModel, history: TrainHistory | None = None
                   ) -> "Checkpoint":
        return cls(
            config=model.config,
            codec=model.codec,
            params={name: arr.copy() for name, arr in model.param_items()},
            projection_checksum=model.remark_channel.checksum(),
            history=list(history.rows) if history else [],
        )

    def build_model(self, remark_channel: RemarkChannel | None = None) -> MiracleModel:
        model = MiracleModel(self.config, self.codec, remark_channel)
        if model.remark_channel.checksum() != self.projection_checksum:
            raise CheckpointError("frozen projection does not match the checkpoint")
        model.set_params(self.params)
        return model


def save_checkpoint(path, ckpt: Checkpoint):
    names = sorted(ckpt.params)
    blob = io.BytesIO()
    offsets = {}
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name], dtype=np.float64)
        offsets[name] = {"offset": blob.tell(), "shape": list(arr.shape)}
        blob.write(arr.tobytes())
    meta = {
        "version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "codec": ckpt.codec.to_dict(),
        "projection_checksum": ckpt.projection_checksum,
        "history": ckpt.history,
        "params": offsets,
    }
    header = json.dumps(meta, sort_keys=True, default=float).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(header)) + header + blob.getvalue()
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 + 32 or not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError(f"{path}: integrity checksum mismatch")
    (hlen,) = struct.unpack("<I", body[len(MAGIC):len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    meta = json.loads(body[header_start:header_start + hlen].decode("utf-8"))
    if meta.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint version {meta.get('version')!r}")
    blob = body[header_start + hlen:]
    params = {}
    for name, entry in meta["params"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype=np.float64, count=count, offset=start)
        params[name] = arr.reshape(shape).copy()
    return Checkpoint(
        config=MiracleConfig.from_dict(meta["config"]),
        codec=FeatureCodec.from_dict(meta["codec"]),
        params=params,
        projection_checksum=meta["projection_checksum"],
        history=meta["history"],
    )
