"""Binary checkpoint container.

Little-endian layout: 4-byte ASCII magic, u32 format version, u32 entry
count, then per entry: u8 type tag, u32 config count + u32 config values,
u32 tensor count, and per tensor a u32 ndim, u32 dims, and the raw float32
payload in row-major order. Float payloads round-trip bit-exactly.

The same container carries network checkpoints ("EVNN"), actor-critic
checkpoints ("EVAC"), and corpus caches ("EVDS").
"""

import struct

import numpy as np

from .errors import CheckpointError
from .layers import layer_from_config
from .network import Network

FORMAT_VERSION = 1


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated container")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u8(self):
        return self.take(1)[0]


def write_container(path, magic, entries, version=FORMAT_VERSION):
    """entries: list of (tag:int, config:list[int], tensors:list[ndarray])."""
    if len(magic) != 4:
        raise ValueError("magic must be 4 ASCII characters")
    parts = [magic.encode("ascii"), struct.pack("<I", version),
             struct.pack("<I", len(entries))]
    for tag, config, tensors in entries:
        parts.append(struct.pack("<B", tag))
        parts.append(struct.pack("<I", len(config)))
        parts.extend(struct.pack("<I", int(v)) for v in config)
        parts.append(struct.pack("<I", len(tensors)))
        for t in tensors:
            arr = np.ascontiguousarray(t, dtype="<f4")
            parts.append(struct.pack("<I", arr.ndim))
            parts.extend(struct.pack("<I", d) for d in arr.shape)
            parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_container(path, magic, version=FORMAT_VERSION):
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, str(path))
    got_magic = r.take(4)
    if got_magic != magic.encode("ascii"):
        raise CheckpointError(
            f"{path}: bad magic {got_magic!r}, expected {magic!r}"
        )
    got_version = r.u32()
    if got_version != version:
        raise CheckpointError(
            f"{path}: unsupported format version {got_version} (expected {version})"
        )
    entries = []
    for _ in range(r.u32()):
        tag = r.u8()
        config = [r.u32() for _ in range(r.u32())]
        tensors = []
        for _ in range(r.u32()):
            ndim = r.u32()
            shape = tuple(r.u32() for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            payload = r.take(4 * count)
            tensors.append(np.frombuffer(payload, dtype="<f4").reshape(shape).copy())
        entries.append((tag, config, tensors))
    if r.pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last entry")
    return entries


def network_entries(net):
    return [(layer.tag, layer.config(), list(layer.params))
            for layer in net.layers]


def network_from_entries(entries):
    layers = []
    for tag, config, tensors in entries:
        layer = layer_from_config(tag, config)
        if len(tensors) != len(layer.params):
            raise CheckpointError(
                f"layer tag {tag}: expected {len(layer.params)} tensors, got {len(tensors)}"
            )
        for p, t in zip(layer.params, tensors):
            if p.shape != t.shape:
                raise CheckpointError(
                    f"layer tag {tag}: tensor shape {t.shape} does not match {p.shape}"
                )
            p[...] = t
        layers.append(layer)
    return Network(layers)


def save_network(path, net, magic="EVNN"):
    write_container(path, magic, network_entries(net))


def load_network(path, magic="EVNN"):
    return network_from_entries(read_container(path, magic))
