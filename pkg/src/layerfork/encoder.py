"""Transformer encoder with a frozen bottom prefix and activation taps.

Canonical parameter names (the checkpoint-portability contract):

    embed.token            (vocab_size, hidden)
    embed.position         (max_seq_len, hidden)
    embed.ln.gamma/.beta   (hidden,)
    layer.{i}.attn.{q,k,v,out}.weight/.bias   1 <= i <= N
    layer.{i}.ln1.gamma/.beta
    layer.{i}.ffn.in.weight/.bias
    layer.{i}.ffn.out.weight/.bias
    layer.{i}.ln2.gamma/.beta
    pool.weight/.bias      (hidden, hidden)
    head.weight/.bias      (hidden, k) or (hidden, 1)

A model may carry fewer layers than its config's `num_layers` (students keep
the bottommost ones); layer indices always refer to base-model depth.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import LayerforkError, ShapeError

NEG_INF = np.float32(-1e9)

_LAYER_RE = re.compile(r"^layer\.(\d+)\.")


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 12
    hidden_dim: int = 768
    num_heads: int = 12
    ffn_dim: int = 3072
    vocab_size: int = 30522
    max_seq_len: int = 128

    def __post_init__(self):
        if self.num_layers < 1:
            raise ShapeError("num_layers must be >= 1")
        if min(self.hidden_dim, self.num_heads, self.ffn_dim,
               self.vocab_size, self.max_seq_len) < 1:
            raise ShapeError("all config extents must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ShapeError("hidden_dim must be divisible by num_heads")

    def to_dict(self):
        return {"num_layers": self.num_layers, "hidden_dim": self.hidden_dim,
                "num_heads": self.num_heads, "ffn_dim": self.ffn_dim,
                "vocab_size": self.vocab_size, "max_seq_len": self.max_seq_len}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    # desk-scale default used by the synthetic suite
    @classmethod
    def toy(cls, num_layers=4, vocab_size=64, max_seq_len=32):
        return cls(num_layers=num_layers, hidden_dim=32, num_heads=2,
                   ffn_dim=64, vocab_size=vocab_size, max_seq_len=max_seq_len)


@dataclass(frozen=True)
class TaskHead:
    kind: str              # "classification" | "regression"
    num_classes: int = 1   # k for classification, 1 for regression

    def __post_init__(self):
        if self.kind == "classification" and self.num_classes < 2:
            raise ShapeError("classification head needs k >= 2")
        if self.kind not in ("classification", "regression"):
            raise ShapeError(f"unknown head kind {self.kind!r}")

    @property
    def out_dim(self):
        return self.num_classes if self.kind == "classification" else 1


def layer_index(name: str):
    m = _LAYER_RE.match(name)
    return int(m.group(1)) if m else None


class ParamStore:
    """Named weight tensors, per-tensor trainable flags, base fingerprint."""

    def __init__(self, tensors: dict, base_fingerprint: dict | None = None):
        self._tensors = dict(tensors)
        self.base_fingerprint = dict(base_fingerprint or {})

    def __getitem__(self, name) -> T.Tensor:
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(sorted(self._tensors))

    def names(self):
        return sorted(self._tensors)

    def tensors(self):
        return [self._tensors[n] for n in sorted(self._tensors)]

    def set(self, name, tensor: T.Tensor):
        self._tensors[name] = tensor

    def drop(self, name):
        del self._tensors[name]

    def trainable_names(self):
        return [n for n in sorted(self._tensors) if self._tensors[n].requires_grad]

    def num_layers(self) -> int:
        idx = [layer_index(n) for n in self._tensors]
        present = [i for i in idx if i is not None]
        return max(present) if present else 0

    def frozen_depth(self) -> int:
        """Largest f such that layers 1..f are entirely non-trainable."""
        f = 0
        for i in range(1, self.num_layers() + 1):
            names = [n for n in self._tensors if layer_index(n) == i]
            if names and not any(self._tensors[n].requires_grad for n in names):
                f = i
            else:
                break
        return f

    def tensor_hash(self, name) -> str:
        return hashlib.sha256(np.ascontiguousarray(self._tensors[name].data).tobytes()).hexdigest()

    def hashes(self, names=None) -> dict:
        return {n: self.tensor_hash(n) for n in (names or self.names())}

    def clone(self) -> "ParamStore":
        out = {}
        for n, t in self._tensors.items():
            out[n] = T.parameter(t.data.copy(), n, trainable=t.requires_grad)
        return ParamStore(out, self.base_fingerprint)

    def clear_grads(self):
        for t in self._tensors.values():
            t.grad = None


def base_tensor_names(store: ParamStore):
    """Names whose values are pinned to the pre-trained base (embeddings + layers)."""
    return [n for n in store.names() if n.startswith("embed.") or n.startswith("layer.")]


def _normal(rng, shape, std=0.02):
    return (rng.standard_normal(shape) * std).astype(np.float32)


def init_params(cfg: EncoderConfig, seed: int = 0) -> ParamStore:
    """Random 'pre-trained' base model; fingerprint captured at creation."""
    rng = np.random.default_rng(seed)
    d, ffn = cfg.hidden_dim, cfg.ffn_dim
    tensors = {}

    def p(name, arr):
        tensors[name] = T.parameter(arr, name, trainable=True)

    p("embed.token", _normal(rng, (cfg.vocab_size, d)))
    p("embed.position", _normal(rng, (cfg.max_seq_len, d)))
    p("embed.ln.gamma", np.ones(d, dtype=np.float32))
    p("embed.ln.beta", np.zeros(d, dtype=np.float32))
    for i in range(1, cfg.num_layers + 1):
        for comp in ("q", "k", "v", "out"):
            p(f"layer.{i}.attn.{comp}.weight", _normal(rng, (d, d)))
            p(f"layer.{i}.attn.{comp}.bias", np.zeros(d, dtype=np.float32))
        p(f"layer.{i}.ln1.gamma", np.ones(d, dtype=np.float32))
        p(f"layer.{i}.ln1.beta", np.zeros(d, dtype=np.float32))
        p(f"layer.{i}.ffn.in.weight", _normal(rng, (d, ffn)))
        p(f"layer.{i}.ffn.in.bias", np.zeros(ffn, dtype=np.float32))
        p(f"layer.{i}.ffn.out.weight", _normal(rng, (ffn, d)))
        p(f"layer.{i}.ffn.out.bias", np.zeros(d, dtype=np.float32))
        p(f"layer.{i}.ln2.gamma", np.ones(d, dtype=np.float32))
        p(f"layer.{i}.ln2.beta", np.zeros(d, dtype=np.float32))
    p("pool.weight", _normal(rng, (d, d)))
    p("pool.bias", np.zeros(d, dtype=np.float32))
    store = ParamStore(tensors)
    store.base_fingerprint = store.hashes(base_tensor_names(store))
    return store


def add_head(store: ParamStore, head: TaskHead, seed: int = 0):
    rng = np.random.default_rng(seed)
    d = store["pool.weight"].data.shape[0]
    store.set("head.weight", T.parameter(_normal(rng, (d, head.out_dim)), "head.weight"))
    store.set("head.bias", T.parameter(np.zeros(head.out_dim, dtype=np.float32), "head.bias"))


def set_frozen_depth(store: ParamStore, f: int) -> ParamStore:
    """Freeze layers 1..f (plus embeddings when f >= 1); the rest trains."""
    n = store.num_layers()
    if not 0 <= f <= n:
        raise ShapeError(f"frozen depth {f} outside [0, {n}]")
    for name in store.names():
        idx = layer_index(name)
        if idx is not None:
            trainable = idx > f
        elif name.startswith("embed."):
            trainable = f == 0
        else:  # pool / head: always task-specific
            trainable = True
        store[name].requires_grad = trainable
    return store


class LayerCounter:
    """Counts transformer-layer executions; checked against the overhead formula."""

    def __init__(self):
        self.count = 0


def _mask_bias(mask: np.ndarray) -> T.Tensor:
    mask = np.asarray(mask, dtype=np.float32)
    if (mask.sum(axis=-1) == 0).any():
        raise LayerforkError("all-padding attention mask")
    bias = (1.0 - mask) * NEG_INF
    return T.Tensor(bias[:, None, None, :])


def encoder_layer(store: ParamStore, cfg: EncoderConfig, i: int, x: T.Tensor,
                  mask_bias: T.Tensor) -> T.Tensor:
    d, h = cfg.hidden_dim, cfg.num_heads
    dh = d // h
    b, s, _ = x.data.shape

    def proj(comp):
        y = T.add(T.matmul(x, store[f"layer.{i}.attn.{comp}.weight"]),
                  store[f"layer.{i}.attn.{comp}.bias"])
        y = T.reshape(y, (b, s, h, dh))
        return T.transpose(y, (0, 2, 1, 3))

    q, k, v = proj("q"), proj("k"), proj("v")
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    scores = T.add(scores, mask_bias)
    att = T.matmul(T.softmax(scores), v)
    att = T.reshape(T.transpose(att, (0, 2, 1, 3)), (b, s, d))
    att = T.add(T.matmul(att, store[f"layer.{i}.attn.out.weight"]),
                store[f"layer.{i}.attn.out.bias"])
    x = T.layernorm(T.add(x, att), store[f"layer.{i}.ln1.gamma"], store[f"layer.{i}.ln1.beta"])
    ffn = T.add(T.matmul(T.gelu(T.add(T.matmul(x, store[f"layer.{i}.ffn.in.weight"]),
                                      store[f"layer.{i}.ffn.in.bias"])),
                         store[f"layer.{i}.ffn.out.weight"]),
                store[f"layer.{i}.ffn.out.bias"])
    return T.layernorm(T.add(x, ffn), store[f"layer.{i}.ln2.gamma"], store[f"layer.{i}.ln2.beta"])


def embed(store: ParamStore, cfg: EncoderConfig, token_ids: np.ndarray) -> T.Tensor:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeError("token_ids must be (batch, seq)")
    if ids.shape[1] > cfg.max_seq_len:
        raise ShapeError(f"sequence length {ids.shape[1]} exceeds max_seq_len {cfg.max_seq_len}")
    if (ids >= cfg.vocab_size).any():
        raise ShapeError("token id out of vocabulary range")
    tok = T.embed_lookup(store["embed.token"], ids)
    pos = T.embed_lookup(store["embed.position"], np.arange(ids.shape[1]))
    x = T.add(tok, pos)
    return T.layernorm(x, store["embed.ln.gamma"], store["embed.ln.beta"])


def run_layers(store: ParamStore, cfg: EncoderConfig, x: T.Tensor, mask_bias: T.Tensor,
               lo: int, hi: int, counter: LayerCounter | None = None) -> T.Tensor:
    for i in range(lo, hi + 1):
        x = encoder_layer(store, cfg, i, x, mask_bias)
        if counter is not None:
            counter.count += 1
    return x


def forward(store: ParamStore, cfg: EncoderConfig, token_ids, attention_mask,
            tap_depth: int | None = None, counter: LayerCounter | None = None) -> T.Tensor:
    """Run the encoder; `tap_depth=t` returns activations after layer t
    (t=0 is the embedding output)."""
    n = store.num_layers()
    depth = n if tap_depth is None else tap_depth
    if not 0 <= depth <= n:
        raise ShapeError(f"tap_depth {tap_depth} outside [0, {n}]")
    x = embed(store, cfg, token_ids)
    bias = _mask_bias(attention_mask)
    return run_layers(store, cfg, x, bias, 1, depth, counter)


def pool_and_head(store: ParamStore, activations: T.Tensor, head: TaskHead) -> T.Tensor:
    """First-token pooling through tanh, then the task's linear head."""
    cls = T.take_token(activations, 0)
    pooled = T.tanh(T.add(T.matmul(cls, store["pool.weight"]), store["pool.bias"]))
    out = T.add(T.matmul(pooled, store["head.weight"]), store["head.bias"])
    if head.kind == "regression":
        out = T.reshape(out, (out.data.shape[0],))
    return out
