"""Weight files: one line of JSON manifest, then raw little-endian float32.

The manifest records the architecture, the tensor names and shapes in
payload order, a format version and the sha256 of the payload.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Architecture

FORMAT = "howlbench-weights"
FORMAT_VERSION = 1


class WeightsError(ValueError):
    """Base class for unreadable or inconsistent weight files."""


class ShapeMismatchError(WeightsError):
    pass


class TruncatedPayloadError(WeightsError):
    pass


class UnknownTensorError(WeightsError):
    pass


class ChecksumError(WeightsError):
    pass


@dataclass
class ModelWeights:
    arch: Architecture
    tensors: dict[str, np.ndarray]

    def payload(self) -> bytes:
        return b"".join(np.ascontiguousarray(self.tensors[n], dtype="<f4").tobytes()
                        for n in self.arch.tensor_shapes())

    def checksum(self) -> str:
        return hashlib.sha256(self.payload()).hexdigest()

    @property
    def n_params(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))


def random_init(arch: Architecture | None = None, seed: int = 0) -> ModelWeights:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases, in storage order."""
    arch = arch or Architecture()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.tensor_shapes().items():
        if name.endswith("bias") or name.split(".")[-1].startswith("bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return ModelWeights(arch, tensors)


def save_weights(w: ModelWeights, path) -> Path:
    path = Path(path)
    shapes = w.arch.tensor_shapes()
    for name, shape in shapes.items():
        if tuple(w.tensors[name].shape) != shape:
            raise ShapeMismatchError(f"{name}: shape {w.tensors[name].shape}, expected {shape}")
    extra = set(w.tensors) - set(shapes)
    if extra:
        raise UnknownTensorError(f"tensors not in the architecture: {sorted(extra)}")
    payload = w.payload()
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "architecture": w.arch.to_dict(),
        "tensors": [{"name": n, "shape": list(s)} for n, s in shapes.items()],
        "dtype": "<f4",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        fh.write(payload)
    return path


def load_weights(path, verify: bool = True) -> ModelWeights:
    raw = Path(path).read_bytes()
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise TruncatedPayloadError(f"{path}: no manifest terminator")
    try:
        manifest = json.loads(head)
    except json.JSONDecodeError as exc:
        raise WeightsError(f"{path}: manifest is not JSON ({exc})") from None
    if manifest.get("format") != FORMAT or manifest.get("version") != FORMAT_VERSION:
        raise WeightsError(f"{path}: unsupported format {manifest.get('format')!r} "
                           f"version {manifest.get('version')!r}")
    arch = Architecture.from_dict(manifest["architecture"])
    expected = arch.tensor_shapes()

    declared = [(t["name"], tuple(t["shape"])) for t in manifest["tensors"]]
    names = [n for n, _ in declared]
    unknown = [n for n in names if n not in expected]
    if unknown:
        raise UnknownTensorError(f"{path}: unknown tensors {unknown}")
    missing = [n for n in expected if n not in names]
    if missing:
        raise ShapeMismatchError(f"{path}: tensors absent from manifest: {missing}")
    for name, shape in declared:
        if shape != expected[name]:
            raise ShapeMismatchError(
                f"{path}: {name} declared {shape} but the architecture needs {expected[name]}")

    need = 4 * sum(int(np.prod(s)) for _, s in declared)
    if len(payload) < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} bytes, expected {need}")
    if len(payload) > need:
        raise WeightsError(f"{path}: {len(payload) - need} trailing bytes after payload")
    if verify and hashlib.sha256(payload).hexdigest() != manifest.get("sha256"):
        raise ChecksumError(f"{path}: payload checksum mismatch")

    flat = np.frombuffer(payload, dtype="<f4")
    tensors = {}
    pos = 0
    for name, shape in declared:
        n = int(np.prod(shape))
        tensors[name] = flat[pos:pos + n].reshape(shape).copy()
        pos += n
    return ModelWeights(arch, tensors)
