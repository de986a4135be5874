"""Binary model container with bit-exact save/load round-trip.

Layout: magic b"CBW1", u32 version, u32 manifest length, UTF-8 JSON manifest,
then raw little-endian blobs in manifest order. The manifest records the
builder spec (so the loader can re-instantiate the architecture), every
parameter (name, shape, dtype, group, adam step) and buffer, and the blob
order: value, m, v per parameter, then buffer values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CBW1"
VERSION = 1


def save_model(path, model, spec: dict):
    params = model.params()
    bufs = model.buffers()
    manifest = {
        "spec": spec,
        "params": [
            {"name": p.name, "shape": list(p.shape), "dtype": str(p.value.dtype),
             "group": p.group, "step": p.step}
            for p in params
        ],
        "buffers": [
            {"name": b.name, "shape": list(b.value.shape), "dtype": str(b.value.dtype)}
            for b in bufs
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for p in params:
            f.write(np.ascontiguousarray(p.value).tobytes())
            f.write(np.ascontiguousarray(p.m).tobytes())
            f.write(np.ascontiguousarray(p.v).tobytes())
        for b in bufs:
            f.write(np.ascontiguousarray(b.value).tobytes())


def read_manifest(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model container")
        version, mlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        return json.loads(f.read(mlen).decode("utf-8"))


def load_into(path, model):
    """Load parameters, Adam state, and buffers into an identically built model."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model container")
        version, mlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        params = model.params()
        bufs = model.buffers()
        if len(params) != len(manifest["params"]) or len(bufs) != len(manifest["buffers"]):
            raise ValueError("model structure does not match container manifest")

        def read_array(meta):
            shape = tuple(meta["shape"])
            dtype = np.dtype(meta["dtype"])
            n = int(np.prod(shape)) if shape else 1
            return np.frombuffer(f.read(n * dtype.itemsize), dtype=dtype).reshape(shape).copy()

        for p, meta in zip(params, manifest["params"]):
            if list(p.shape) != meta["shape"]:
                raise ValueError(f"shape mismatch for {meta['name']}")
            p.value[...] = read_array(meta)
            p.m[...] = read_array(meta)
            p.v[...] = read_array(meta)
            p.step = meta["step"]
        for b, meta in zip(bufs, manifest["buffers"]):
            b.value[...] = read_array(meta)
    return manifest["spec"]
