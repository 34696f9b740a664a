"""Bit-exact model serialization.

Layout (all integers little-endian uint32):

    magic "COEP" | format version | header length | header JSON (utf-8)
    | parameter payloads, float32 little-endian, in header manifest order
    | sha256 digest of everything above (32 bytes)

The header carries the model config, the vocabulary, and a parameter
manifest (name + shape per entry), making checkpoints self-contained.
Saving a loaded checkpoint reproduces the original bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"COEP"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt, truncated, or mismatched checkpoint file."""


def _pack_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, config: dict, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    manifest = [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()]
    header = {"config": config, "params": manifest, "meta": meta or {}}
    header_bytes = _pack_header(header)
    body = bytearray()
    body += MAGIC
    body += struct.pack("<II", FORMAT_VERSION, len(header_bytes))
    body += header_bytes
    for name, arr in params.items():
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    Path(path).write_bytes(bytes(body))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], dict]:
    """Returns (config, ordered name->array params, meta); validates checksum."""
    raw = Path(path).read_bytes()
    if len(raw) < 44 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    digest = raw[-32:]
    body = raw[:-32]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header_start = 12
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    offset = header_start + header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(body):
            raise CheckpointError(f"{path}: truncated parameter payload")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset)
        params[entry["name"]] = arr.reshape(shape).copy()
        offset = end
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return header["config"], params, header.get("meta", {})


def save_model(path, model, vocab, kind: str, meta: dict | None = None) -> None:
    """Serialize a model plus its vocabulary."""
    config = {
        "kind": kind,
        "model": model.config.to_dict(),
        "vocab": vocab.id_to_token,
    }
    params = {name: p.data for name, p in model.parameters().items()}
    save_checkpoint(path, config, params, meta)


def load_model(path, expect_kind: str | None = None):
    """Rebuild (model, vocab, meta) from a checkpoint."""
    from .corpus.vocab import SPECIAL_TOKENS, Vocab
    from .numerics import Rng
    from .seq2seq import ModelConfig, Seq2SeqModel

    config, params, meta = load_checkpoint(path)
    if expect_kind is not None and config.get("kind") != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {config.get('kind')!r}, expected {expect_kind!r}"
        )
    vocab = Vocab(config["vocab"][len(SPECIAL_TOKENS) :])
    model = Seq2SeqModel(ModelConfig.from_dict(config["model"]), Rng(0))
    expected = set(model.parameters())
    if expected != set(params):
        raise CheckpointError(f"{path}: parameter set does not match the architecture")
    model.load_snapshot(params)
    return model, vocab, meta
