"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"GTRL"
    version u32      currently 1 (unknown versions are refused)
    meta    u32 byte length + UTF-8 JSON blob
    tensors repeated until EOF:
        name  u32 byte length + UTF-8 name
        rank  u32
        dims  u64 * rank
        data  float32 little-endian, row-major

The metadata blob carries the config echo, the vocabulary (hash and word
list), the speaker/publisher id orders, and the validation metric at save
time — everything needed to rebuild the model for standalone eval.
Weights are stored at 32-bit precision; training stays 64-bit.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .model import ModelParams
from .rng import RngState
from .textgraph import Vocab

MAGIC = b"GTRL"
VERSION = 1


class CheckpointError(Exception):
    pass


def vocab_hash(vocab: Vocab) -> str:
    return hashlib.sha256("\n".join(vocab.words).encode("utf-8")).hexdigest()


def _side_order(ids: dict) -> list:
    return [name for name, _ in sorted(ids.items(), key=lambda kv: kv[1])]


def save_checkpoint(path, params: ModelParams, cfg: TrainConfig, vocab: Vocab,
                    metric: dict | None = None) -> None:
    meta = {
        "config": cfg.to_dict(),
        "vocab": vocab.words[1:],
        "vocab_hash": vocab_hash(vocab),
        "speakers": _side_order(params.side.speaker_ids),
        "publishers": _side_order(params.side.publisher_ids),
        "metric": metric,
    }
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        handle.write(struct.pack("<I", len(meta_bytes)))
        handle.write(meta_bytes)
        for name, array in params.named():
            name_bytes = name.encode("utf-8")
            handle.write(struct.pack("<I", len(name_bytes)))
            handle.write(name_bytes)
            handle.write(struct.pack("<I", array.ndim))
            for dim in array.shape:
                handle.write(struct.pack("<Q", dim))
            handle.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_exact(handle, count, what):
    data = handle.read(count)
    if len(data) != count:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


@dataclass
class LoadedModel:
    params: ModelParams
    config: TrainConfig
    vocab: Vocab
    metadata: dict


def load_checkpoint(path) -> LoadedModel:
    with open(path, "rb") as handle:
        if handle.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(handle, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(handle, 4, "metadata length"))
        meta = json.loads(_read_exact(handle, meta_len, "metadata"))
        tensors = {}
        while True:
            head = handle.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(handle, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(handle, 4, f"{name} rank"))
            dims = tuple(
                struct.unpack("<Q", _read_exact(handle, 8, f"{name} dims"))[0]
                for _ in range(rank)
            )
            count = int(np.prod(dims)) if dims else 1
            payload = _read_exact(handle, 4 * count, f"{name} data")
            tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)

    cfg = TrainConfig(**meta["config"])
    vocab = Vocab.from_words(meta["vocab"])
    params = ModelParams.build(
        np.zeros((len(vocab), cfg.embed_dim)),
        meta["speakers"],
        meta["publishers"],
        cfg,
        RngState(cfg.seed),
    )
    expected = {name for name, _ in params.named()}
    if expected != set(tensors):
        missing = sorted(expected - set(tensors))
        extra = sorted(set(tensors) - expected)
        raise CheckpointError(f"{path}: tensor names mismatch (missing {missing}, extra {extra})")
    for name, array in params.named():
        stored = tensors[name]
        if stored.shape != array.shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {stored.shape}, expected {array.shape}"
            )
        array[...] = stored
    return LoadedModel(params=params, config=cfg, vocab=vocab, metadata=meta)
