"""Checkpoint archive format.

A single binary file holding named float32 parameter arrays plus a JSON
header with arbitrary metadata (schedule, architecture config, ...):

    magic "DFARCH1\\n" | uint64-LE header length | header JSON | raw payload

The header lists each array's name, shape, and byte offset into the payload;
array data is raw little-endian float32. Writes are atomic (temp + rename).
"""

import hashlib
import json
import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np

MAGIC = b"DFARCH1\n"


class CheckpointError(RuntimeError):
    pass


def save_archive(path, params, meta=None):
    """Write named float32 arrays and a metadata dict to ``path`` atomically."""
    entries = []
    chunks = []
    offset = 0
    for name, array in params.items():
        data = np.ascontiguousarray(array, dtype="<f4")
        raw = data.tobytes()
        entries.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "params": entries, "payload_bytes": offset}).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for raw in chunks:
                fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def load_archive(path):
    """Return (params OrderedDict[name -> float32 array], meta dict)."""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint archive: {path}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read(header["payload_bytes"])
    params = OrderedDict()
    for entry in header["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        flat = np.frombuffer(payload[start : start + nbytes], dtype="<f4")
        params[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return params, header["meta"]


def module_params(module):
    """Named float32 arrays for a torch module's state (params + buffers)."""
    out = OrderedDict()
    for name, tensor in module.state_dict().items():
        out[name] = tensor.detach().cpu().numpy().astype(np.float32)
    return out


def load_module_params(module, params, prefix=""):
    """Copy archive arrays into a torch module's state dict."""
    import torch

    state = module.state_dict()
    for name, tensor in state.items():
        key = prefix + name
        if key not in params:
            raise CheckpointError(f"missing parameter in archive: {key}")
        array = params[key]
        if list(array.shape) != list(tensor.shape):
            raise CheckpointError(
                f"shape mismatch for {key}: archive {list(array.shape)} vs model {list(tensor.shape)}"
            )
        state[name] = torch.from_numpy(array).to(tensor.dtype)
    module.load_state_dict(state)


def params_checksum(params):
    """Stable digest over names + raw bytes; used for freeze-invariance checks."""
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    return digest.hexdigest()


def module_checksum(module):
    return params_checksum(module_params(module))
