"""Self-describing binary container for model and prompt state.

Layout: magic "AGFM" | format_version u32 LE | header_len u64 LE | header JSON
| payload. The payload concatenates the manifest's tensors as little-endian
float32 in manifest order; the header records kind, dims/config, seed, the
ordered tensor manifest, and a SHA-256 over the payload. Everything needed to
rebuild the state lives in the file, so another implementation can produce or
consume it bit-exactly.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import Dims, ModelParameters, TENSOR_NAMES

MAGIC = b"AGFM"
FORMAT_VERSION = 1

PROMPT_TENSOR_NAMES = ("phi_w", "phi_b", "psi")


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt, or unsupported checkpoint files."""


def tensor_payload(tensors: dict[str, np.ndarray]) -> bytes:
    return b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors.values())


def content_hash(tensors: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(tensor_payload(tensors)).hexdigest()


def _write(path: Path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    payload = tensor_payload(tensors)
    header = dict(header)
    header["manifest"] = [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()]
    header["hash"] = hashlib.sha256(payload).hexdigest()
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def save_model_checkpoint(path: str | Path, model: ModelParameters,
                          config: dict | None = None, seed: int | None = None) -> None:
    header = {
        "kind": "model",
        "dims": {"d_prime": model.dims.d_prime, "hidden": model.dims.hidden,
                 "d": model.dims.d, "t": model.dims.t},
        "config": config or {},
        "seed": seed,
    }
    _write(Path(path), header, model.tensors())


def save_prompt_checkpoint(path: str | Path, prompt, seed: int | None = None) -> None:
    header = {
        "kind": "prompt",
        "target": prompt.target,
        "model_hash": prompt.source_model_hash,
        "tune_epochs": prompt.tune_epochs,
        "tune_lr": prompt.tune_lr,
        "shot_nodes": list(prompt.shot_nodes),
        "seed": seed,
    }
    tensors = {name: getattr(prompt, name) for name in PROMPT_TENSOR_NAMES}
    _write(Path(path), header, tensors)


def read_header(path: str | Path) -> dict:
    with Path(path).open("rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version} "
                                  f"(this build reads {FORMAT_VERSION})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise CheckpointError(f"{path}: truncated header")
        return json.loads(blob.decode("utf-8"))


def load_checkpoint(path: str | Path):
    """Read and verify a container; returns ModelParameters or PromptParameters."""
    path = Path(path)
    with path.open("rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} "
                              f"(this build reads {FORMAT_VERSION})")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    blob = raw[16:16 + header_len]
    if len(blob) != header_len:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(blob.decode("utf-8"))
    payload = raw[16 + header_len:]

    manifest = header["manifest"]
    expected = sum(int(np.prod(m["shape"])) for m in manifest) * 4
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, "
                              f"manifest requires {expected}")
    if hashlib.sha256(payload).hexdigest() != header["hash"]:
        raise CheckpointError(f"{path}: payload hash mismatch (corrupt file)")

    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest:
        size = int(np.prod(entry["shape"])) * 4
        arr = np.frombuffer(payload[offset:offset + size], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += size

    kind = header.get("kind")
    if kind == "model":
        missing = [n for n in TENSOR_NAMES if n not in tensors]
        if missing:
            raise CheckpointError(f"{path}: model tensors missing: {missing}")
        dims = Dims(d_prime=int(header["dims"]["d_prime"]),
                    hidden=int(header["dims"]["hidden"]),
                    d=int(header["dims"]["d"]))
        return ModelParameters(dims=dims, **{n: tensors[n] for n in TENSOR_NAMES})
    if kind == "prompt":
        from .prompt import PromptParameters
        missing = [n for n in PROMPT_TENSOR_NAMES if n not in tensors]
        if missing:
            raise CheckpointError(f"{path}: prompt tensors missing: {missing}")
        return PromptParameters(
            target=header["target"],
            phi_w=tensors["phi_w"], phi_b=tensors["phi_b"], psi=tensors["psi"],
            tune_epochs=int(header["tune_epochs"]),
            tune_lr=float(header["tune_lr"]),
            shot_nodes=tuple(int(v) for v in header["shot_nodes"]),
            source_model_hash=header["model_hash"],
        )
    raise CheckpointError(f"{path}: unknown kind {kind!r}")
