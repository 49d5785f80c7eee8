"""Bit-exact serialization: packed index streams, CBQ files, tensor bundles.

CBQ container layout (all integers little-endian):

    header:  magic "CBQ1" | version u16 | scheme u8 | bits u8 |
             group_count u32 | rank u8 | dims u64 * rank |
             seed u64 | max_iterations u32
    per group (in span order):
             centroids  f32 * 2**bits
             occupancy  u32 * 2**bits
             indices    ceil(len * bits / 8) bytes, fixed-width packed

Index packing is little-endian within bytes: the first label occupies the
least-significant bits of the first byte, and each group's stream is padded
with zero bits to a byte boundary so groups stay independently addressable.

A tensor bundle is a JSON manifest next to a raw payload file of row-major
little-endian float32 blobs; unknown manifest fields are ignored.
"""

import json
import math
import struct
from pathlib import Path

import numpy as np

from . import core
from .errors import (
    BadConfigError,
    BadMagicError,
    CorruptIndexError,
    IOFailureError,
    LabelOverflowError,
    LengthMismatchError,
    ManifestMismatchError,
    NonzeroPaddingError,
    UnsupportedVersionError,
)
from .grouping import GroupedQuantizedTensor, split_groups

__all__ = [
    "CBQ_MAGIC",
    "CBQ_VERSION",
    "pack_indices",
    "unpack_indices",
    "cbq_size_bytes",
    "write_cbq",
    "read_cbq",
    "write_bundle",
    "read_bundle",
]

CBQ_MAGIC = b"CBQ1"
CBQ_VERSION = 1

_HEADER_FIXED = struct.Struct("<4sHBBIB")  # magic, version, scheme, bits, groups, rank
_HEADER_TAIL = struct.Struct("<QI")  # seed, max_iterations


def pack_indices(labels, bits: int) -> bytes:
    """Pack labels into a fixed-width little-endian bit stream.

    Bit ``j`` of the stream lands in bit ``j % 8`` of byte ``j // 8``; the
    result is ``ceil(n * bits / 8)`` bytes with zeroed pad bits.
    """
    if not 1 <= bits <= 8:
        raise BadConfigError(f"bits must be in [1, 8], got {bits}")
    lab = np.asarray(labels).reshape(-1)
    if lab.size == 0:
        return b""
    if lab.min() < 0 or lab.max() >= (1 << bits):
        raise LabelOverflowError(f"labels do not fit in {bits} bits")
    bitmat = np.unpackbits(lab.astype(np.uint8)[:, None], axis=1, count=bits, bitorder="little")
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_indices(data: bytes, n: int, bits: int) -> np.ndarray:
    """Inverse of ``pack_indices``; validates length and zero padding."""
    if not 1 <= bits <= 8:
        raise BadConfigError(f"bits must be in [1, 8], got {bits}")
    expected = (n * bits + 7) // 8
    if len(data) != expected:
        raise LengthMismatchError(f"expected {expected} packed bytes for n={n}, got {len(data)}")
    if n == 0:
        return np.empty(0, dtype=np.uint8)
    stream = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if stream[n * bits :].any():
        raise NonzeroPaddingError("pad bits beyond the last label are not zero")
    bitmat = stream[: n * bits].reshape(n, bits).astype(np.int64)
    return (bitmat @ (1 << np.arange(bits, dtype=np.int64))).astype(np.uint8)


def cbq_size_bytes(n: int, rank: int, bits: int, group_count: int) -> int:
    """Exact byte size of the CBQ serialization of an n-element tensor."""
    header = _HEADER_FIXED.size + 8 * rank + _HEADER_TAIL.size
    codebooks = group_count * (1 << bits) * (4 + 4)  # f32 centroid + u32 occupancy
    indices = sum((length * bits + 7) // 8 for _, length in split_groups(n, group_count))
    return header + codebooks + indices


def write_cbq(g: GroupedQuantizedTensor) -> bytes:
    """Serialize a grouped quantized tensor to CBQ bytes."""
    cfg = g.cfg
    parts = [
        _HEADER_FIXED.pack(CBQ_MAGIC, CBQ_VERSION, cfg.scheme.value, cfg.bits, cfg.group_count, len(g.shape)),
        struct.pack(f"<{len(g.shape)}Q", *g.shape),
        _HEADER_TAIL.pack(cfg.seed, cfg.max_iterations),
    ]
    for qv in g.groups:
        if len(qv.codebook) != cfg.n_levels:
            raise BadConfigError("group codebook size disagrees with cfg.bits")
        parts.append(qv.codebook.centroids.astype("<f4").tobytes())
        parts.append(qv.codebook.occupancy.astype("<u4").tobytes())
        parts.append(pack_indices(qv.indices.labels, cfg.bits))
    return b"".join(parts)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise LengthMismatchError(
                f"truncated CBQ data: wanted {count} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out


def read_cbq(data: bytes) -> GroupedQuantizedTensor:
    """Parse CBQ bytes back into a grouped quantized tensor.

    Validates the magic, version, label bounds, occupancy consistency, pad
    bits, and total length.  Source min/max per group are restored from the
    reconstructed values (the container does not store the original range).
    """
    if data[:4] != CBQ_MAGIC:
        raise BadMagicError("not a CBQ blob")
    cur = _Cursor(data)
    magic, version, scheme_id, bits, group_count, rank = _HEADER_FIXED.unpack(cur.take(_HEADER_FIXED.size))
    if version != CBQ_VERSION:
        raise UnsupportedVersionError(f"CBQ version {version} not supported")
    try:
        scheme = core.Scheme(scheme_id)
    except ValueError:
        raise UnsupportedVersionError(f"unknown scheme id {scheme_id}") from None
    shape = struct.unpack(f"<{rank}Q", cur.take(8 * rank))
    seed, max_iterations = _HEADER_TAIL.unpack(cur.take(_HEADER_TAIL.size))

    cfg = core.QuantConfig(
        scheme=scheme,
        bits=bits,
        max_iterations=max_iterations,
        seed=seed,
        group_count=group_count,
    )
    n = math.prod(shape)
    spans = split_groups(n, group_count)

    groups = []
    n_levels = 1 << bits
    for _, length in spans:
        centroids = np.frombuffer(cur.take(4 * n_levels), dtype="<f4").astype(np.float32)
        occupancy = np.frombuffer(cur.take(4 * n_levels), dtype="<u4").astype(np.uint32)
        labels = unpack_indices(cur.take((length * bits + 7) // 8), length, bits)
        if not np.array_equal(np.bincount(labels, minlength=n_levels), occupancy):
            raise CorruptIndexError("stored occupancy disagrees with decoded labels")
        values = centroids[labels]
        groups.append(
            core.QuantizedVector(
                codebook=core.Codebook(centroids, occupancy),
                indices=core.IndexVector(labels),
                source_min=float(values.min()),
                source_max=float(values.max()),
            )
        )
    if cur.pos != len(data):
        raise LengthMismatchError(f"{len(data) - cur.pos} trailing bytes after the last group")
    return GroupedQuantizedTensor(shape=tuple(int(d) for d in shape), groups=tuple(groups), spans=spans, cfg=cfg)


def write_bundle(manifest_path, tensors: dict) -> None:
    """Write named float32 tensors as a JSON manifest plus a raw payload file."""
    manifest_path = Path(manifest_path)
    payload_path = manifest_path.with_suffix(".bin")
    entries = []
    blobs = []
    offset = 0
    for name, tensor in tensors.items():
        blob = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": [int(d) for d in np.shape(tensor)],
                "dtype": "f4",
                "offset": offset,
                "length": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format": "tensor-bundle",
        "version": 1,
        "payload": payload_path.name,
        "tensors": entries,
    }
    try:
        payload_path.write_bytes(b"".join(blobs))
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise IOFailureError(f"cannot write bundle: {exc}") from exc


def read_bundle(manifest_path) -> dict:
    """Read a tensor bundle back as an ordered ``{name: float32 ndarray}`` dict."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise IOFailureError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestMismatchError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or "tensors" not in manifest or "payload" not in manifest:
        raise ManifestMismatchError("manifest lacks required fields 'payload' and 'tensors'")
    try:
        payload = (manifest_path.parent / manifest["payload"]).read_bytes()
    except OSError as exc:
        raise IOFailureError(f"cannot read payload: {exc}") from exc

    tensors = {}
    for entry in manifest["tensors"]:
        try:
            name = entry["name"]
            if name in tensors:
                raise ManifestMismatchError(f"duplicate tensor name {name!r}")
            if entry.get("dtype", "f4") != "f4":
                raise ManifestMismatchError(f"unsupported dtype {entry.get('dtype')!r} for {name!r}")
            shape = tuple(int(d) for d in entry["shape"])
            offset, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestMismatchError(f"malformed manifest entry: {exc}") from exc
        if length != 4 * math.prod(shape):
            raise ManifestMismatchError(f"length of {name!r} disagrees with its shape")
        if offset < 0 or offset + length > len(payload):
            raise ManifestMismatchError(f"blob of {name!r} extends past the payload")
        tensors[name] = np.frombuffer(payload[offset : offset + length], dtype="<f4").reshape(shape).copy()
    return tensors
