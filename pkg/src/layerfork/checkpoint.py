"""Single-task checkpoint container and its binary file format.

Layout: magic ``LFCK`` | u32 version (LE) | u64 manifest length (LE) |
JSON manifest | zero padding to a 64-byte boundary | raw float32 tensor
payloads, each tensor aligned to 64 bytes.  Writing is fully deterministic,
so write-read-write round-trips are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from . import tensor as T
from .errors import CheckpointError
from .tasks import TaskSpec, Vocab

MAGIC = b"LFCK"
FORMAT_VERSION = 1
ALIGN = 64


@dataclass
class Checkpoint:
    """A serialized single-task model: config, depths, head, weights, provenance."""

    cfg: enc.EncoderConfig
    frozen_depth: int
    task_layers: int
    task: TaskSpec
    store: enc.ParamStore    # embeddings + layers 1..(f + task_layers) + pool + head
    vocab: list              # word list beyond the reserved ids

    @property
    def head(self) -> enc.TaskHead:
        return enc.TaskHead(self.task.head_kind,
                            self.task.num_classes if self.task.head_kind == "classification" else 1)

    @property
    def num_model_layers(self) -> int:
        return self.frozen_depth + self.task_layers

    def vocab_obj(self) -> Vocab:
        return Vocab(self.vocab)

    def logits(self, ids, mask, counter=None) -> np.ndarray:
        acts = enc.forward(self.store, self.cfg, ids, mask, counter=counter)
        return enc.pool_and_head(self.store, acts, self.head).data

    def frozen_tensor_names(self):
        names = [n for n in self.store.names() if n.startswith("embed.")]
        for n in self.store.names():
            idx = enc.layer_index(n)
            if idx is not None and idx <= self.frozen_depth:
                names.append(n)
        return sorted(names)

    def verify_frozen_against_base(self):
        """Each frozen tensor must hash to the base fingerprint entry."""
        bad = []
        for name in self.frozen_tensor_names():
            expect = self.store.base_fingerprint.get(name)
            if expect is None or self.store.tensor_hash(name) != expect:
                bad.append(name)
        return bad


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    names = ckpt.store.names()
    index = {}
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(ckpt.store[name].data, dtype=np.float32)
        raw = arr.tobytes()
        offset = _align(offset)
        index[name] = {
            "shape": list(arr.shape),
            "offset": offset,
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
        blobs.append((offset, raw))
        offset += len(raw)
    manifest = {
        "config": ckpt.cfg.to_dict(),
        "frozen_depth": ckpt.frozen_depth,
        "task_layers": ckpt.task_layers,
        "task": ckpt.task.to_dict(),
        "base_fingerprint": dict(sorted(ckpt.store.base_fingerprint.items())),
        "vocab": list(ckpt.vocab),
        "trainable": ckpt.store.trainable_names(),
        "tensors": index,
        "payload_size": offset,
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = MAGIC + FORMAT_VERSION.to_bytes(4, "little") + len(mbytes).to_bytes(8, "little")
    payload_base = _align(len(header) + len(mbytes))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(mbytes)
        fh.write(b"\0" * (payload_base - len(header) - len(mbytes)))
        pos = 0
        for off, raw in blobs:
            fh.write(b"\0" * (off - pos))
            fh.write(raw)
            pos = off + len(raw)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    version = int.from_bytes(data[4:8], "little")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    mlen = int.from_bytes(data[8:16], "little")
    try:
        manifest = json.loads(data[16:16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt manifest: {e}") from None
    payload_base = _align(16 + mlen)
    payload = data[payload_base:]
    if len(payload) < manifest["payload_size"]:
        raise CheckpointError(f"{path}: truncated payload")
    trainable = set(manifest["trainable"])
    tensors = {}
    for name, entry in manifest["tensors"].items():
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        raw = payload[entry["offset"]:entry["offset"] + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor {name}")
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"{path}: integrity failure on tensor {name}")
        arr = np.frombuffer(raw, dtype=np.float32).reshape(shape).copy()
        tensors[name] = T.parameter(arr, name, trainable=name in trainable)
    store = enc.ParamStore(tensors, manifest["base_fingerprint"])
    return Checkpoint(
        cfg=enc.EncoderConfig.from_dict(manifest["config"]),
        frozen_depth=manifest["frozen_depth"],
        task_layers=manifest["task_layers"],
        task=TaskSpec.from_dict(manifest["task"]),
        store=store,
        vocab=manifest["vocab"],
    )


def content_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
