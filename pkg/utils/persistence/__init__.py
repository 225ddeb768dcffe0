"""
Checkpoint persistence for models, classifiers and candidate sets.
"""

from utils.persistence.checkpoint import (
    FORMAT_VERSION,
    KINDS,
    MAGIC,
    Checkpoint,
    CheckpointCorruptedError,
    CheckpointError,
    CheckpointVersionError,
    checkpoint_id,
    decode,
    encode,
    from_checkpoint,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    to_checkpoint,
    write_checkpoint,
)

__all__ = [
    'FORMAT_VERSION',
    'KINDS',
    'MAGIC',
    'Checkpoint',
    'CheckpointCorruptedError',
    'CheckpointError',
    'CheckpointVersionError',
    'checkpoint_id',
    'decode',
    'encode',
    'from_checkpoint',
    'load_checkpoint',
    'read_checkpoint',
    'save_checkpoint',
    'to_checkpoint',
    'write_checkpoint',
]
