"""Self-describing binary checkpoints for module parameters and buffers.

Layout (little-endian):

    magic      8 bytes  b"PSPCKPT1"
    length     uint32   size of the JSON manifest in bytes
    manifest   UTF-8 JSON: modules (type, hyperparameters), arrays (name,
               kind, shape), config hash and free-form metadata
    payload    float64 arrays in manifest order, row-major

Arrays are written with `tobytes`, so a save/load round trip is bit-exact.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from src.nn.layers import Module


logger = logging.getLogger(__name__)

MAGIC = b"PSPCKPT1"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")


class CheckpointError(RuntimeError):
    """A checkpoint is missing, corrupt or does not fit the target modules."""


def _arrays(modules: Mapping[str, Module]) -> List[Dict[str, Any]]:
    entries = []
    for root, module in modules.items():
        for name, p in module.parameters().items():
            entries.append({"name": f"{root}.{name}", "kind": "param", "array": p.data})
        for name, b in module.buffers().items():
            entries.append({"name": f"{root}.{name}", "kind": "buffer", "array": b})
    return entries


def _layers(modules: Mapping[str, Module]) -> List[Dict[str, Any]]:
    layers = []
    for root, module in modules.items():
        for prefix, sub in module.named_modules(root):
            layers.append(
                {"name": prefix, "type": type(sub).__name__, "hyperparameters": sub.hyperparameters()}
            )
    return layers


def _manifest(
    modules: Mapping[str, Module], config_hash: str, meta: Optional[Mapping[str, Any]]
) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "meta": dict(meta or {}),
        "layers": _layers(modules),
        "arrays": [
            {"name": e["name"], "kind": e["kind"], "shape": list(e["array"].shape)}
            for e in _arrays(modules)
        ],
    }


def save_checkpoint(
    path: Union[str, Path],
    modules: Mapping[str, Module],
    config_hash: str = "",
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write every parameter and buffer of `modules` to `path`."""
    path = Path(path)
    manifest = json.dumps(_manifest(modules, config_hash, meta), sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(_LENGTH.pack(len(manifest)))
        f.write(manifest)
        for entry in _arrays(modules):
            f.write(np.ascontiguousarray(entry["array"], dtype="<f8").tobytes())
    tmp.replace(path)
    logger.debug("Saved checkpoint %s", path)


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse only the header of a checkpoint."""
    manifest, _ = _read(Path(path))
    return manifest


def _read(path: Path) -> Tuple[Dict[str, Any], bytes]:
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    offset = len(MAGIC)
    if len(raw) < offset + _LENGTH.size:
        raise CheckpointError(f"{path}: truncated header")
    (length,) = _LENGTH.unpack_from(raw, offset)
    offset += _LENGTH.size
    try:
        manifest = json.loads(raw[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt manifest ({e})") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')}")
    return manifest, raw[offset + length:]


def load_checkpoint(path: Union[str, Path], modules: Mapping[str, Module]) -> Dict[str, Any]:
    """Copy stored arrays into `modules` in place and return the manifest.

    The modules must have been built with the same architecture: layer types
    and hyperparameters, array names, order and shapes are all checked
    against the manifest. Nothing is copied unless the whole file checks out.
    """
    path = Path(path)
    manifest, payload = _read(path)

    expected = json.loads(json.dumps(_layers(modules)))
    stored_layers = manifest.get("layers")
    if stored_layers != expected:
        diff = next(
            (f"{e['name']} ({e['type']} {e['hyperparameters']})"
             for e, s in zip(expected, stored_layers or []) if e != s),
            "layer count",
        )
        raise CheckpointError(f"{path}: layer mismatch at {diff}")

    targets = _arrays(modules)
    stored = manifest.get("arrays") or []
    if [e["name"] for e in targets] != [a.get("name") for a in stored]:
        raise CheckpointError(f"{path}: stored arrays do not match the network layout")

    values = []
    offset = 0
    for entry, meta in zip(targets, stored):
        shape = tuple(meta.get("shape", ()))
        if shape != entry["array"].shape:
            raise CheckpointError(
                f"{path}: {meta['name']} has shape {shape}, network expects {entry['array'].shape}"
            )
        size = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + size > len(payload):
            raise CheckpointError(f"{path}: truncated payload at {meta['name']}")
        values.append(np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset).reshape(shape))
        offset += size
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing bytes")

    for entry, value in zip(targets, values):
        entry["array"][...] = value
    logger.debug("Loaded checkpoint %s (config %s)", path, manifest.get("config_hash"))
    return manifest
