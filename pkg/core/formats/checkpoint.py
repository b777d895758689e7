"""
Checkpoint Container

    "P2SCKPT1"                8 bytes
    manifest length           uint32 little-endian
    manifest                  UTF-8 JSON
    payload                   row-major little-endian IEEE-754 values

The manifest carries the bundle spec, free-form metadata (method, seed,
normalization statistics) and, per tensor, {dtype, shape, offset} with
offsets relative to the payload start. Parameters and buffers are both
stored so eval-mode outputs survive a round trip bit-exactly.

Tensors are stored at the precision the bundle was built with: "f4"
(float32) for normal runs, "f8" for float64 verification-mode bundles. The
dtype code sits in each manifest entry and must match the rebuilt model.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.errors import CheckpointError
from core.models import BundleSpec, ModelBundle, build_bundle


logger = logging.getLogger(__name__)

MAGIC = b"P2SCKPT1"
LENGTH_FORMAT = "<I"
STORAGE_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


def _storage_code(array: np.ndarray) -> str:
    if array.dtype == np.float32:
        return "f4"
    if array.dtype == np.float64:
        return "f8"
    raise CheckpointError(f"cannot store arrays of dtype {array.dtype}")


def encode_checkpoint(bundle: ModelBundle, metadata: Optional[Dict[str, Any]] = None) -> bytes:
    """Serialize a bundle; identical inputs give identical bytes."""
    state = bundle.state_arrays()
    tensors = {}
    chunks = []
    offset = 0
    for name, array in state.items():
        code = _storage_code(array)
        raw = np.ascontiguousarray(array, dtype=STORAGE_DTYPES[code]).tobytes()
        tensors[name] = {"dtype": code, "shape": list(array.shape), "offset": offset}
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format": 1,
        "bundle": bundle.spec.model_dump(mode="json"),
        "metadata": metadata or {},
        "tensors": tensors,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack(LENGTH_FORMAT, len(manifest_bytes)) + manifest_bytes + b"".join(chunks)


def write_checkpoint(
    bundle: ModelBundle,
    path: Union[str, Path],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(bundle, metadata))
    logger.debug("wrote checkpoint %s", path)
    return path


def _split(data: bytes) -> Tuple[dict, bytes]:
    header_size = len(MAGIC) + struct.calcsize(LENGTH_FORMAT)
    if len(data) < header_size:
        raise CheckpointError("checkpoint is shorter than its fixed header")
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {data[:len(MAGIC)]!r}")
    (manifest_len,) = struct.unpack_from(LENGTH_FORMAT, data, len(MAGIC))
    if header_size + manifest_len > len(data):
        raise CheckpointError("manifest length runs past the end of the checkpoint")
    try:
        manifest = json.loads(data[header_size:header_size + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint manifest: {e}")
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), dict):
        raise CheckpointError("checkpoint manifest lacks a tensor table")
    return manifest, data[header_size + manifest_len:]


def _validated_layout(manifest: dict, payload: bytes, expected: Dict[str, np.ndarray]) -> Dict[str, tuple]:
    """Check every tensor entry against the freshly built bundle; nothing is loaded yet."""
    tensors = manifest["tensors"]
    missing = sorted(set(expected) - set(tensors))
    unknown = sorted(set(tensors) - set(expected))
    if missing or unknown:
        raise CheckpointError(f"tensor table mismatch (missing {missing}, unexpected {unknown})")

    layout = {}
    spans = []
    for name, entry in tensors.items():
        try:
            code, shape, offset = entry["dtype"], tuple(entry["shape"]), entry["offset"]
        except (KeyError, TypeError):
            raise CheckpointError(f"malformed manifest entry for '{name}'")
        if code not in STORAGE_DTYPES:
            raise CheckpointError(f"unsupported dtype '{code}' for '{name}'")
        if STORAGE_DTYPES[code] != expected[name].dtype.newbyteorder("<"):
            raise CheckpointError(f"'{name}' is stored as {code}, model expects {expected[name].dtype}")
        if shape != expected[name].shape:
            raise CheckpointError(f"'{name}' has shape {shape}, model expects {expected[name].shape}")
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise CheckpointError(f"invalid offset {offset!r} for '{name}'")
        nbytes = int(np.prod(shape, dtype=np.int64)) * STORAGE_DTYPES[code].itemsize
        if offset + nbytes > len(payload):
            raise CheckpointError(f"'{name}' runs past the end of the payload")
        layout[name] = (code, shape, offset, nbytes)
        spans.append((offset, offset + nbytes, name))

    spans.sort()
    for (_, end, first), (start, _, second) in zip(spans, spans[1:]):
        if start < end:
            raise CheckpointError(f"tensors '{first}' and '{second}' overlap in the payload")
    used = sum(nbytes for *_, nbytes in layout.values())
    if used != len(payload):
        raise CheckpointError(f"payload holds {len(payload)} bytes but the manifest accounts for {used}")
    return layout


def decode_checkpoint(data: bytes) -> Tuple[ModelBundle, Dict[str, Any]]:
    manifest, payload = _split(data)
    try:
        spec = BundleSpec.model_validate(manifest.get("bundle"))
    except ValidationError as e:
        raise CheckpointError(f"invalid bundle spec in checkpoint: {e.errors()[0]['msg']}")

    bundle = build_bundle(spec, seed=0)
    state = bundle.state_arrays()
    layout = _validated_layout(manifest, payload, state)
    for name, (code, shape, offset, nbytes) in layout.items():
        values = np.frombuffer(payload, dtype=STORAGE_DTYPES[code], count=nbytes // STORAGE_DTYPES[code].itemsize,
                               offset=offset)
        state[name][...] = values.reshape(shape)
    bundle.eval()
    return bundle, manifest.get("metadata", {})


def read_checkpoint(path: Union[str, Path]) -> ModelBundle:
    """Rebuild the bundle stored at path (in eval mode)."""
    bundle, _ = decode_checkpoint(Path(path).read_bytes())
    return bundle


def read_checkpoint_with_metadata(path: Union[str, Path]) -> Tuple[ModelBundle, Dict[str, Any]]:
    return decode_checkpoint(Path(path).read_bytes())
