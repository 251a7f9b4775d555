"""Checkpoint files: a network's tensors plus enough metadata to rebuild it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .architectures import NetworkSpec, build_architecture
from .container import ContainerError, pack, unpack
from .network import Network

logger = logging.getLogger("microsleep")

CHECKPOINT_MAGIC = "MICROSLEEP-CKPT"


class CheckpointError(ContainerError):
    """Unusable checkpoint."""


@dataclass(frozen=True)
class ParamSet:
    arch_id: str
    embedding: bool
    layers: tuple[str, ...]
    tensors: dict[str, np.ndarray] = field(repr=False)


def save_params(network: Network) -> bytes:
    spec = network.spec
    meta = {
        "arch_id": spec.arch_id,
        "embedding": spec.embedding,
        "layers": network.names,
    }
    return pack(CHECKPOINT_MAGIC, network.tensors(), meta, dtype="<f4")


def load_params(blob: bytes, spec: NetworkSpec | None = None) -> ParamSet:
    """
    Decode a checkpoint. With `spec`, every tensor shape is checked against a
    freshly built network of that spec.
    """
    try:
        meta, tensors = unpack(blob, CHECKPOINT_MAGIC)
    except ContainerError as e:
        raise CheckpointError(str(e)) from None
    params = ParamSet(
        arch_id=meta.get("arch_id", ""),
        embedding=bool(meta.get("embedding", False)),
        layers=tuple(meta.get("layers", ())),
        tensors=tensors,
    )
    if spec is not None:
        expected = Network(spec, seed=0).tensors()
        if list(expected) != list(tensors):
            raise CheckpointError(
                f"Checkpoint layers ({params.arch_id}) do not match architecture {spec.arch_id}"
            )
        for name, value in tensors.items():
            if value.shape != expected[name].shape:
                raise CheckpointError(
                    f"Shape mismatch for {name}: checkpoint {value.shape}, "
                    f"architecture {spec.arch_id} {expected[name].shape}"
                )
    return params


def network_from_params(params: ParamSet, dtype=np.float32) -> Network:
    spec = build_architecture(params.arch_id, embedding=params.embedding)
    network = Network(spec, seed=0, dtype=dtype)
    try:
        network.load_tensors(params.tensors)
    except ValueError as e:
        raise CheckpointError(f"Checkpoint does not fit {spec.arch_id}: {e}") from None
    return network


def save_checkpoint(network: Network, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_params(network))
    logger.debug(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path: Path, dtype=np.float32) -> Network:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return network_from_params(load_params(path.read_bytes()), dtype)
