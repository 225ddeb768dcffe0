"""
Binary checkpoint container for models, classifiers, candidate sets and
embedding collections.

Layout (all integers little-endian):

    b"UPDM" | u16 version | u32 header length | JSON header | float64 payload | SHA-256 digest

The header lists every tensor as (name, shape, offset, count) into the
payload, plus the object kind, kind-specific metadata and the provenance
block. The digest covers every preceding byte and doubles as the
checkpoint id.
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from utils.conditioning.model import DenoiserConfig, DenoiserModel
from utils.metrics.classifier import ClassifierReport, ConceptClassifier
from erasure_implementations.types import ErasureSpec, UnlearnedModel
from restoration_implementations.candidates import CandidateEntry, CandidateSet
from restoration_implementations.config import ASConfig

logger = logging.getLogger(__name__)

MAGIC = b"UPDM"
FORMAT_VERSION = 1
DIGEST_SIZE = 32
_PREFIX = struct.Struct("<4sHI")

KINDS = ("denoiser", "unlearned", "classifier", "candidates", "embeddings")

PathLike = Union[str, Path]


class CheckpointError(RuntimeError):
    """Raised when a file cannot be used as a checkpoint."""


class CheckpointCorruptedError(CheckpointError):
    """Raised on truncation, digest mismatch or an inconsistent tensor table."""


class CheckpointVersionError(CheckpointError):
    """Raised when the file was written by an unsupported format version."""


@dataclass
class Checkpoint:
    """
    Decoded container contents.

    Attributes:
        kind: One of KINDS
        tensors: Name -> float64 array, in write order
        metadata: Kind-specific JSON metadata
        provenance: Config hash, seed, stage name and parent checkpoint id
        digest: SHA-256 of the file body (set on read/write)
    """
    kind: str
    tensors: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    digest: Optional[str] = None

    def __post_init__(self):
        """Validate the kind."""
        if self.kind not in KINDS:
            raise ValueError(f"Unknown checkpoint kind '{self.kind}', expected one of {KINDS}")

    def summary(self) -> Dict[str, Any]:
        """Header view without tensor values."""
        return {
            "kind": self.kind,
            "digest": self.digest,
            "provenance": self.provenance,
            "metadata": self.metadata,
            "tensors": {name: list(values.shape) for name, values in self.tensors.items()},
        }


def encode(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes (digest appended)."""
    table, chunks, offset = [], [], 0
    for name, values in checkpoint.tensors.items():
        array = np.ascontiguousarray(values, dtype="<f8")
        table.append({"name": name, "shape": list(array.shape), "offset": offset, "count": int(array.size)})
        chunks.append(array.tobytes())
        offset += array.size
    header = json.dumps(
        {
            "kind": checkpoint.kind,
            "metadata": checkpoint.metadata,
            "provenance": checkpoint.provenance,
            "tensors": table,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def decode(blob: bytes) -> Checkpoint:
    """
    Parse and verify checkpoint bytes.

    Raises:
        CheckpointError: Not a checkpoint (magic mismatch)
        CheckpointVersionError: Unsupported version
        CheckpointCorruptedError: Truncated, digest mismatch or bad tensor table
    """
    if len(blob) < _PREFIX.size + DIGEST_SIZE:
        if blob[:4] and not MAGIC.startswith(blob[:4]):
            raise CheckpointError("Not a checkpoint: magic bytes missing")
        raise CheckpointCorruptedError(f"Checkpoint truncated: only {len(blob)} bytes")
    magic, version, header_length = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"Not a checkpoint: magic bytes {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"Checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")

    body, digest = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointCorruptedError("Checkpoint digest mismatch: file is truncated or corrupted")

    header_end = _PREFIX.size + header_length
    try:
        header = json.loads(body[_PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptedError(f"Checkpoint header unreadable: {e}") from e
    payload = np.frombuffer(body[header_end:], dtype="<f8")

    tensors = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size or int(np.prod(entry["shape"], dtype=np.int64)) != count:
            raise CheckpointCorruptedError(f"Tensor '{entry['name']}' does not fit the payload")
        tensors[entry["name"]] = payload[start:start + count].astype(np.float64).reshape(entry["shape"])
    return Checkpoint(
        kind=header["kind"],
        tensors=tensors,
        metadata=header["metadata"],
        provenance=header["provenance"],
        digest=digest.hex(),
    )


def write_checkpoint(checkpoint: Checkpoint, path: PathLike) -> str:
    """Write atomically (temporary file then rename); returns the checkpoint id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode(checkpoint)
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        with open(tmp_path, "wb") as f:
            f.write(blob)
        os.replace(tmp_path, path)
    except OSError as e:
        logger.error(f"Error writing checkpoint {path}: {e}")
        raise
    checkpoint.digest = blob[-DIGEST_SIZE:].hex()
    return checkpoint.digest


def read_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        return decode(f.read())


def checkpoint_id(path: PathLike) -> str:
    """Digest stored at the end of the file (not re-verified)."""
    with open(path, "rb") as f:
        f.seek(-DIGEST_SIZE, os.SEEK_END)
        return f.read(DIGEST_SIZE).hex()


def _model_metadata(model: DenoiserModel) -> Dict[str, Any]:
    return {"vocab": list(model.vocab), "config": asdict(model.config), "checksum": model.checksum()}


def to_checkpoint(obj: Any, provenance: Optional[Dict[str, Any]] = None) -> Checkpoint:
    """Pack a supported object into a Checkpoint."""
    provenance = dict(provenance or {})
    if isinstance(obj, UnlearnedModel):
        metadata = _model_metadata(obj.model)
        metadata.update(obj.provenance())
        tensors = obj.model.state_dict()
        tensors["erasure.losses"] = np.asarray(obj.losses, dtype=np.float64)
        return Checkpoint("unlearned", tensors, metadata, provenance)
    if isinstance(obj, DenoiserModel):
        return Checkpoint("denoiser", obj.state_dict(), _model_metadata(obj), provenance)
    if isinstance(obj, ConceptClassifier):
        tensors = obj.state_dict()
        tensors["report.losses"] = np.asarray(obj.report.losses, dtype=np.float64)
        metadata = {"holdout_accuracy": obj.report.holdout_accuracy, "checksum": obj.checksum()}
        return Checkpoint("classifier", tensors, metadata, provenance)
    if isinstance(obj, CandidateSet):
        dim = obj.entries[0].embedding.size if obj.entries else 0
        tensors = {
            "epochs": np.array([e.epoch for e in obj.entries], dtype=np.float64),
            "losses": obj.losses().astype(np.float64),
            "embeddings": obj.embeddings() if obj.entries else np.zeros((0, dim)),
        }
        metadata = {"config": obj.config.to_dict(), "search": obj.provenance}
        return Checkpoint("candidates", tensors, metadata, provenance)
    if isinstance(obj, dict):
        tensors = {str(name): np.asarray(values, dtype=np.float64) for name, values in obj.items()}
        return Checkpoint("embeddings", tensors, {}, provenance)
    raise TypeError(f"Cannot checkpoint objects of type {type(obj).__name__}")


def from_checkpoint(checkpoint: Checkpoint) -> Any:
    """Rebuild the object a Checkpoint was packed from."""
    meta, tensors = checkpoint.metadata, checkpoint.tensors
    if checkpoint.kind in ("denoiser", "unlearned"):
        state = {name: values for name, values in tensors.items() if not name.startswith("erasure.")}
        model = DenoiserModel.from_state_dict(state, meta["vocab"], DenoiserConfig(**meta["config"]))
        if checkpoint.kind == "denoiser":
            return model
        return UnlearnedModel(
            model=model,
            spec=ErasureSpec.from_dict(meta["spec"]),
            base_checksum=meta["base_checksum"],
            seed=meta["seed"],
            losses=tensors["erasure.losses"].tolist(),
        )
    if checkpoint.kind == "classifier":
        state = {name: values for name, values in tensors.items() if name in ConceptClassifier.PARAMETER_NAMES}
        report = ClassifierReport(losses=tensors["report.losses"].tolist(), holdout_accuracy=meta["holdout_accuracy"])
        return ConceptClassifier.from_state_dict(state, report)
    if checkpoint.kind == "candidates":
        entries = [
            CandidateEntry(epoch=int(epoch), embedding=embedding, loss=float(loss))
            for epoch, embedding, loss in zip(tensors["epochs"], tensors["embeddings"], tensors["losses"])
        ]
        return CandidateSet(entries=entries, config=ASConfig(**meta["config"]), provenance=meta["search"])
    return dict(tensors)


def save_checkpoint(obj: Any, path: PathLike, provenance: Optional[Dict[str, Any]] = None) -> str:
    """
    Save a model, unlearned model, classifier, candidate set or
    name -> embedding mapping.

    Args:
        obj: Object to save
        path: Destination file
        provenance: Config hash, seed, stage name, parent checkpoint id

    Returns:
        Checkpoint id (hex SHA-256)

    Example usage:
        >>> cid = save_checkpoint(base, "out/base.ckpt", {"stage": "train-base", "seed": 0})
        >>> load_checkpoint("out/base.ckpt").checksum() == base.checksum()
    """
    return write_checkpoint(to_checkpoint(obj, provenance), path)


def load_checkpoint(path: PathLike) -> Any:
    """
    Load and verify a checkpoint, returning the rebuilt object.

    Raises:
        CheckpointError: Magic mismatch
        CheckpointVersionError: Unsupported format version
        CheckpointCorruptedError: Truncated or tampered file
    """
    return from_checkpoint(read_checkpoint(path))
