"""Merge single-task checkpoints into one shared-backbone multi-task model."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from . import tensor as T
from .checkpoint import Checkpoint, content_hash, read_checkpoint
from .errors import MergeError

MERGED_MANIFEST_VERSION = 1


@dataclass
class Branch:
    frozen_depth: int
    num_model_layers: int
    store: enc.ParamStore        # task layers f+1..N_s plus pool and head
    task: object                 # TaskSpec
    head: enc.TaskHead


@dataclass
class MergedModel:
    cfg: enc.EncoderConfig
    base_fingerprint: dict
    shared: enc.ParamStore       # embeddings + layers 1..F from the common base
    shared_depth: int            # F = max over tasks of f
    branches: dict               # task id -> Branch, lexicographically ordered
    vocab: list

    def task_ids(self):
        return sorted(self.branches)

    def descriptors(self):
        return [(b.frozen_depth, b.num_model_layers - b.frozen_depth)
                for b in (self.branches[t] for t in self.task_ids())]


def validate_mergeable(ckpts: list) -> list:
    """Return a list of human-readable problems; empty means mergeable."""
    if not ckpts:
        return ["no checkpoints given"]
    problems = []
    first = ckpts[0]
    seen = set()
    for ck in ckpts:
        if ck.task.task_id in seen:
            problems.append(f"duplicate task id {ck.task.task_id!r}")
        seen.add(ck.task.task_id)
        if ck.cfg != first.cfg:
            problems.append(f"config mismatch for task {ck.task.task_id!r}")
        if ck.store.base_fingerprint != first.store.base_fingerprint:
            problems.append(f"base fingerprint mismatch for task {ck.task.task_id!r}")
        if ck.vocab != first.vocab:
            problems.append(f"vocabulary mismatch for task {ck.task.task_id!r}")
        for tensor_name in ck.verify_frozen_against_base():
            problems.append(f"task {ck.task.task_id!r}: frozen tensor "
                            f"{tensor_name!r} deviates from the base fingerprint")
    return problems


def _slice_branch(ck: Checkpoint) -> Branch:
    tensors = {}
    for name in ck.store.names():
        idx = enc.layer_index(name)
        if name.startswith("embed.") or (idx is not None and idx <= ck.frozen_depth):
            continue
        tensors[name] = T.parameter(ck.store[name].data.copy(), name, trainable=False)
    return Branch(frozen_depth=ck.frozen_depth, num_model_layers=ck.num_model_layers,
                  store=enc.ParamStore(tensors, ck.store.base_fingerprint),
                  task=ck.task, head=ck.head)


def _shared_from(ck: Checkpoint, depth: int) -> enc.ParamStore:
    tensors = {}
    for name in ck.store.names():
        idx = enc.layer_index(name)
        if name.startswith("embed.") or (idx is not None and idx <= depth):
            tensors[name] = T.parameter(ck.store[name].data.copy(), name, trainable=False)
    return enc.ParamStore(tensors, ck.store.base_fingerprint)


def merge(ckpts: list) -> MergedModel:
    problems = validate_mergeable(ckpts)
    if problems:
        raise MergeError("; ".join(problems))
    ordered = sorted(ckpts, key=lambda c: c.task.task_id)
    depth = max(c.frozen_depth for c in ordered)
    donor = min((c for c in ordered if c.frozen_depth == depth),
                key=lambda c: c.task.task_id)
    branches = {c.task.task_id: _slice_branch(c) for c in ordered}
    return MergedModel(cfg=ordered[0].cfg,
                       base_fingerprint=dict(ordered[0].store.base_fingerprint),
                       shared=_shared_from(donor, depth), shared_depth=depth,
                       branches=branches, vocab=list(ordered[0].vocab))


def infer(merged: MergedModel, token_ids, attention_mask, tasks=None,
          counter: enc.LayerCounter | None = None) -> dict:
    """Run the shared stack once up to the deepest requested branch point,
    then each requested task's branch off its tap."""
    if tasks is None:
        tasks = merged.task_ids()
    tasks = sorted(tasks)
    for t in tasks:
        if t not in merged.branches:
            raise MergeError(f"unknown task id {t!r}")
    if not tasks:
        return {}
    max_f = max(merged.branches[t].frozen_depth for t in tasks)
    taps_needed = {merged.branches[t].frozen_depth for t in tasks}
    ids = np.asarray(token_ids, dtype=np.int64)
    mask = np.asarray(attention_mask, dtype=np.float32)
    bias = enc._mask_bias(mask)
    x = enc.embed(merged.shared, merged.cfg, ids)
    taps = {0: x} if 0 in taps_needed else {}
    for i in range(1, max_f + 1):
        x = enc.encoder_layer(merged.shared, merged.cfg, i, x, bias)
        if counter is not None:
            counter.count += 1
        if i in taps_needed:
            taps[i] = x
    outputs = {}
    for t in tasks:
        b = merged.branches[t]
        y = enc.run_layers(b.store, merged.cfg, taps[b.frozen_depth], bias,
                           b.frozen_depth + 1, b.num_model_layers, counter)
        outputs[t] = enc.pool_and_head(b.store, y, b.head).data
    return outputs


@dataclass(frozen=True)
class OverheadReport:
    layers: int
    reference: int
    percent: float

    def __str__(self):
        if self.layers == self.reference:
            return f"{self.layers} (100%)"
        return f"{self.layers} ({self.percent:.1f}%)"


def overhead(descriptors, shared: bool = True, base_layers: int = 12,
             reference: int | None = None) -> OverheadReport:
    """Total transformer layers to serve all tasks, vs. full fine-tuning.

    With sharing: max_f + sum of task layers.  Without: sum of (f + task
    layers).  Reference defaults to base_layers * number of tasks.
    """
    descriptors = list(descriptors)
    if reference is None:
        reference = base_layers * len(descriptors)
    if not descriptors:
        return OverheadReport(0, reference, 0.0)
    if shared:
        layers = max(f for f, _ in descriptors) + sum(n for _, n in descriptors)
    else:
        layers = sum(f + n for f, n in descriptors)
    percent = 100.0 * layers / reference if reference else 0.0
    return OverheadReport(layers, reference, percent)


def merged_overhead(merged: MergedModel, tasks=None, base_layers: int = 12) -> OverheadReport:
    if tasks is None:
        tasks = merged.task_ids()
    descs = [(merged.branches[t].frozen_depth,
              merged.branches[t].num_model_layers - merged.branches[t].frozen_depth)
             for t in sorted(tasks)]
    return overhead(descs, shared=True, base_layers=base_layers)


def update_task(merged: MergedModel, task_id: str, ckpt: Checkpoint) -> MergedModel:
    """Hot-swap one task's branch; all other branches are untouched."""
    if task_id not in merged.branches:
        raise MergeError(f"unknown task id {task_id!r}")
    if ckpt.cfg != merged.cfg:
        raise MergeError("config mismatch in replacement checkpoint")
    if ckpt.store.base_fingerprint != merged.base_fingerprint:
        raise MergeError("base fingerprint mismatch in replacement checkpoint")
    if ckpt.vocab != merged.vocab:
        raise MergeError("vocabulary mismatch in replacement checkpoint")
    bad = ckpt.verify_frozen_against_base()
    if bad:
        raise MergeError(f"replacement frozen tensors deviate from base: {bad[:3]}")
    branches = dict(merged.branches)
    branches[task_id] = _slice_branch(ckpt)
    new_depth = max(b.frozen_depth for b in branches.values())
    if new_depth > merged.shared_depth:
        shared = _shared_from(ckpt, new_depth)
    elif new_depth < merged.shared_depth:
        tensors = {}
        for name in merged.shared.names():
            idx = enc.layer_index(name)
            if idx is None or idx <= new_depth:
                tensors[name] = merged.shared[name]
        shared = enc.ParamStore(tensors, merged.base_fingerprint)
    else:
        shared = merged.shared
    return MergedModel(cfg=merged.cfg, base_fingerprint=merged.base_fingerprint,
                       shared=shared, shared_depth=new_depth, branches=branches,
                       vocab=merged.vocab)


def write_merged_manifest(ckpt_paths: list, out_path) -> None:
    """Merged-model file: member checkpoints listed by content hash."""
    out_dir = os.path.dirname(os.path.abspath(out_path))
    members = []
    for p in ckpt_paths:
        ck = read_checkpoint(p)
        members.append({"path": os.path.relpath(os.path.abspath(p), out_dir),
                        "sha256": content_hash(p),
                        "task_id": ck.task.task_id})
    members.sort(key=lambda m: m["task_id"])
    manifest = {"version": MERGED_MANIFEST_VERSION, "members": members}
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_merged(manifest_path) -> MergedModel:
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MERGED_MANIFEST_VERSION:
        raise MergeError(f"unsupported merged-manifest version")
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    ckpts = []
    for member in manifest["members"]:
        path = os.path.join(base_dir, member["path"])
        if content_hash(path) != member["sha256"]:
            raise MergeError(f"member checkpoint {member['path']!r} does not match "
                             "its recorded content hash")
        ckpts.append(read_checkpoint(path))
    return merge(ckpts)
