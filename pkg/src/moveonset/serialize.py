"""Versioned binary model container with a JSON side-car for provenance.

Layout (all little-endian):
  magic "MOVM" | u16 version | u8 kind length | kind ascii |
  u32 entry count | per entry: u16 name length, name ascii, u8 ndim,
  u32 dims... | concatenated float32 blobs in entry order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from . import nets
from .svm import SvmModel

MAGIC = b"MOVM"
VERSION = 1


class SerializationError(Exception):
    pass


def _model_kind(model) -> str:
    if isinstance(model, SvmModel):
        return "SVM"
    if isinstance(model, nets.EegnetNet):
        return "EEGNET"
    if isinstance(model, nets.MlpNet):
        return "MLP"
    raise SerializationError(f"unsupported model type {type(model).__name__}")


def _named_arrays(model) -> list[tuple[str, np.ndarray]]:
    if isinstance(model, SvmModel):
        return [
            ("weights", np.asarray(model.weights)),
            ("bias", np.array([model.bias])),
            ("calibration", np.array([model.calib_a, model.calib_b])),
            ("c_value", np.array([model.c_value])),
        ]
    return [(name, tensor.detach().numpy())
            for name, tensor in model.state_dict().items()]


def save_model(path: str | Path, model, metadata: dict | None = None) -> None:
    path = Path(path)
    kind = _model_kind(model)
    entries = _named_arrays(model)

    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", VERSION)
    buf += struct.pack("<B", len(kind)) + kind.encode("ascii")
    buf += struct.pack("<I", len(entries))
    for name, arr in entries:
        encoded = name.encode("ascii")
        buf += struct.pack("<H", len(encoded)) + encoded
        buf += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            buf += struct.pack("<I", dim)
    for _, arr in entries:
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path.write_bytes(bytes(buf))

    meta = {"kind": kind, "format_version": VERSION}
    if kind == "SVM":
        meta["n_features"] = int(np.asarray(model.weights).size)
        meta["c_value"] = model.c_value  # exact; the f4 blob would round it
        meta["grid_scores"] = {str(c): s for c, s in model.grid_scores.items()}
    elif kind == "EEGNET":
        meta["n_channels"] = model.n_channels
        meta["n_samples"] = model.n_samples
    else:
        meta["n_features"] = model.n_features
    if metadata:
        meta.update(metadata)
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _read_container(path: Path):
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise SerializationError("bad magic bytes")
    pos = 4
    (version,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if version != VERSION:
        raise SerializationError(f"unsupported container version {version}")
    (klen,) = struct.unpack_from("<B", data, pos)
    pos += 1
    kind = data[pos:pos + klen].decode("ascii")
    pos += klen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    shapes = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("ascii")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        shapes.append((name, dims))
    arrays = {}
    for name, dims in shapes:
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos)
        pos += 4 * size
        arrays[name] = arr.reshape(dims).astype(np.float64)
    return kind, arrays


def load_model(path: str | Path):
    path = Path(path)
    kind, arrays = _read_container(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text())

    if kind == "SVM":
        grid_scores = {float(c): float(s)
                       for c, s in meta.get("grid_scores", {}).items()}
        return SvmModel(weights=arrays["weights"],
                        bias=float(arrays["bias"][0]),
                        calib_a=float(arrays["calibration"][0]),
                        calib_b=float(arrays["calibration"][1]),
                        c_value=float(meta.get("c_value", arrays["c_value"][0])),
                        grid_scores=grid_scores)
    if kind == "EEGNET":
        net = nets.EegnetNet(n_channels=meta["n_channels"],
                             n_samples=meta["n_samples"])
    elif kind == "MLP":
        net = nets.MlpNet(meta["n_features"])
    else:
        raise SerializationError(f"unknown model kind {kind!r}")
    state = {}
    for name, arr in arrays.items():
        # batch-norm step counters are integral in the torch state dict
        dtype = torch.int64 if name.endswith("num_batches_tracked") else torch.float32
        state[name] = torch.as_tensor(arr).to(dtype)
    net.load_state_dict(state)
    net.eval()
    return net
