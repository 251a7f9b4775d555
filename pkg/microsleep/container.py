"""
Byte container shared by checkpoints and the conditioned-recording cache.

    <MAGIC> <version>\\n
    <metadata byte count>\\n
    <metadata JSON, sorted keys>
    <raw little-endian tensors, in metadata order>

The layout carries no timestamps, so equal content gives equal bytes.
"""

from __future__ import annotations

import json

import numpy as np

FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Unreadable or mismatched container."""


def pack(magic: str, tensors: dict[str, np.ndarray], meta: dict | None = None,
         dtype: str = "<f4") -> bytes:
    """Serialize named tensors (insertion order) with extra metadata."""
    names = list(tensors)
    body = dict(meta or {})
    body.update({
        "version": FORMAT_VERSION,
        "dtype": dtype,
        "names": names,
        "shapes": [list(np.shape(tensors[n])) for n in names],
    })
    meta_bytes = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = f"{magic} {FORMAT_VERSION}\n{len(meta_bytes)}\n".encode("ascii")
    payload = b"".join(np.ascontiguousarray(tensors[n], dtype=dtype).tobytes() for n in names)
    return head + meta_bytes + payload


def unpack(blob: bytes, magic: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of pack. Returns (metadata, tensors)."""
    first = blob.find(b"\n")
    second = blob.find(b"\n", first + 1)
    if first < 0 or second < 0:
        raise ContainerError("Missing container header")
    try:
        found_magic, version = blob[:first].decode("ascii").split(" ")
        meta_len = int(blob[first + 1:second])
    except (UnicodeDecodeError, ValueError):
        raise ContainerError("Corrupted container header") from None
    if found_magic != magic:
        raise ContainerError(f"Bad magic {found_magic!r} (expected {magic!r})")
    if version != str(FORMAT_VERSION):
        raise ContainerError(f"Unsupported container version {version} (expected {FORMAT_VERSION})")

    start = second + 1
    try:
        meta = json.loads(blob[start:start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ContainerError("Corrupted container metadata") from None
    if meta.get("version") != FORMAT_VERSION:
        raise ContainerError(f"Metadata version {meta.get('version')} does not match header")

    dtype = np.dtype(meta["dtype"])
    offset = start + meta_len
    tensors = {}
    for name, shape in zip(meta["names"], meta["shapes"]):
        count = int(np.prod(shape)) if shape else 1
        size = count * dtype.itemsize
        if offset + size > len(blob):
            raise ContainerError(f"Container truncated inside tensor {name!r}")
        tensors[name] = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise ContainerError(f"{len(blob) - offset} trailing bytes after the last tensor")
    return meta, tensors
