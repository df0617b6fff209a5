# ==============================================
# File: src/tools/checkpoint.py
# Description: Versioned model checkpoints (safetensors) plus the vocabulary file
# ==============================================
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional
import json
import logging

import numpy as np
from safetensors import safe_open
from safetensors.numpy import save_file

from src.core.encoding import Vocabulary
from src.core.errors import CheckpointError
from src.core.gmn import ModelParams
from src.core.training import TrainConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Vocabulary
    threshold: float
    config: TrainConfig
    splits: Dict[str, List[str]]


def vocab_path_for(path: Path) -> Path:
    return Path(f"{path}.vocab")


def save_checkpoint(path: Path, params: ModelParams, vocab: Vocabulary, threshold: float,
                    config: TrainConfig, splits: Optional[Dict[str, List[str]]] = None) -> None:
    path = Path(path)
    metadata = {
        "format_version": FORMAT_VERSION,
        "threshold": repr(float(threshold)),
        "config": config.model_dump_json(),
        "splits": json.dumps(splits or {}, sort_keys=True),
        "vocab_size": str(len(vocab)),
        "vocab_sha256": vocab.digest(),
    }
    save_file({name: np.ascontiguousarray(t) for name, t in params.items()}, str(path), metadata=metadata)
    vocab.save(vocab_path_for(path))
    logger.info("Saved checkpoint %s (vocab %d, threshold %.4f)", path, len(vocab), threshold)


def load_checkpoint(path: Path, vocab_path: Optional[Path] = None) -> Checkpoint:
    """Load and cross-check a checkpoint; any mismatch raises CheckpointError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    vocab_path = Path(vocab_path) if vocab_path else vocab_path_for(path)
    try:
        with safe_open(str(path), framework="np") as fh:
            metadata = fh.metadata() or {}
            tensors = {name: fh.get_tensor(name) for name in fh.keys()}
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc

    version = metadata.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version!r}, expected {FORMAT_VERSION!r}")
    if not vocab_path.exists():
        raise CheckpointError(f"{path}: vocabulary file {vocab_path} is missing")
    vocab = Vocabulary.load(vocab_path)
    if vocab.digest() != metadata.get("vocab_sha256"):
        raise CheckpointError(f"{vocab_path} does not match the vocabulary the checkpoint was trained with")

    config = TrainConfig.model_validate_json(metadata["config"])
    try:
        params = ModelParams(tensors)
        params.check_shapes(config.gmn_config())
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if params.vocab_size != len(vocab):
        raise CheckpointError(f"{path}: embedding has {params.vocab_size} rows, vocabulary has {len(vocab)}")
    return Checkpoint(params, vocab, float(metadata["threshold"]), config, json.loads(metadata.get("splits", "{}")))
