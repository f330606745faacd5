"""Single-file model checkpoints.

Layout: the magic line ``STSCKPT 1``, a header line giving the byte length
of a JSON manifest, the manifest itself (network config plus the name and
shape of every stored array, in order) and then the concatenated arrays as
little-endian float32.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from .network import Network, NetworkConfig

MAGIC = b"STSCKPT"
VERSION = 1


def _arrays(net: Network):
    yield from ((n, p) for n, p, _ in net.named_params())
    yield from net.named_buffers()


def save_checkpoint(net: Network, path, extra: dict | None = None) -> Path:
    path = Path(path)
    arrays = list(_arrays(net))
    manifest = {
        "config": net.config.to_dict(),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "extra": extra or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b" %d\n" % VERSION)
        fh.write(b"%d\n" % len(blob))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    os.replace(tmp, path)  # never leave a half-written checkpoint under the final name
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        if int(head[1]) != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {int(head[1])}")
        try:
            n = int(fh.readline())
            manifest = json.loads(fh.read(n))
        except ValueError as exc:
            raise FormatError(f"{path}: corrupt manifest ({exc})") from None
        arrays = {}
        for entry in manifest["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise FormatError(f"{path}: truncated data for {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after last array")
    return manifest, arrays


def load_into(net: Network, path) -> Network:
    _, arrays = read_checkpoint(path)
    targets = dict(_arrays(net))
    missing = sorted(set(targets) - set(arrays))
    unknown = sorted(set(arrays) - set(targets))
    if missing or unknown:
        raise ShapeError(f"checkpoint layer names differ: missing {missing}, unexpected {unknown}")
    for name, a in arrays.items():
        if a.shape != targets[name].shape:
            raise ShapeError(f"{name}: checkpoint shape {a.shape} != network shape {targets[name].shape}")
        targets[name][...] = a
    return net


def load_checkpoint(path, *, dtype=np.float32) -> Network:
    manifest, _ = read_checkpoint(path)
    net = Network(NetworkConfig.from_dict(manifest["config"]), seed=0, dtype=dtype)
    return load_into(net, path)
