"""Shared fixtures: toy models, fake fine-tuned checkpoints, datasets."""

import numpy as np
import pytest

from layerfork import encoder as enc
from layerfork import tensor as T
from layerfork.checkpoint import Checkpoint
from layerfork.tasks import TaskSpec, Vocab, build_vocab, synth_task

# Acceptance-criterion results collected by tests/test_acceptance.py; the
# terminal-summary hook prints one pass/fail line per criterion.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status} criterion {num}: {detail}")


@pytest.fixture(scope="session")
def toy_cfg():
    return enc.EncoderConfig.toy()


@pytest.fixture(scope="session")
def toy_base(toy_cfg):
    return enc.init_params(toy_cfg, seed=0)


@pytest.fixture(scope="session")
def keyword_data():
    spec, train_ds, dev_ds = synth_task("keyword", seed=0, train_size=128,
                                        dev_size=64)
    vocab = build_vocab(train_ds)
    return spec, train_ds, dev_ds, vocab


def fake_finetune(base, cfg, task, frozen_depth, seed=0, num_model_layers=None,
                  vocab=None):
    """A 'fine-tuned' checkpoint without training: the trainable layers, pool
    and head are perturbed deterministically; frozen tensors stay byte-equal
    to the base.  Good enough for merge/serialization tests, which only care
    about the weight-partition contract, not the loss."""
    n = num_model_layers if num_model_layers is not None else cfg.num_layers
    head = enc.TaskHead(task.head_kind,
                        task.num_classes if task.head_kind == "classification" else 1)
    tensors = {}
    for name in base.names():
        idx = enc.layer_index(name)
        if idx is not None and idx > n:
            continue
        tensors[name] = T.parameter(base[name].data.copy(), name)
    store = enc.ParamStore(tensors, base.base_fingerprint)
    enc.add_head(store, head, seed=seed)
    enc.set_frozen_depth(store, frozen_depth)
    rng = np.random.default_rng(1000 + seed)
    for name in store.trainable_names():
        if name.startswith("embed."):
            # embeddings live in the merged model's shared stack, so even an
            # f=0 member must keep them at the base values to stay mergeable
            continue
        t = store[name]
        t.data = t.data + (rng.standard_normal(t.data.shape) * 0.02).astype(t.data.dtype)
    if vocab is None:
        vocab = [f"w{i:02d}" for i in range(min(16, cfg.vocab_size - 4))]
    elif isinstance(vocab, Vocab):
        vocab = vocab.to_list()
    return Checkpoint(cfg=cfg, frozen_depth=frozen_depth,
                      task_layers=n - frozen_depth, task=task, store=store,
                      vocab=list(vocab))


def toy_task(task_id, head_kind="classification", num_classes=2, schema="single"):
    metric = "pearson" if head_kind == "regression" else "accuracy"
    return TaskSpec(task_id, head_kind, num_classes, metric, schema)


def random_batch(cfg, rng, batch=4, seq=10):
    ids = rng.integers(4, cfg.vocab_size, size=(batch, seq))
    ids[:, 0] = 2  # leading CLS
    mask = np.ones((batch, seq), dtype=np.float32)
    for row in range(batch):
        keep = int(rng.integers(2, seq + 1))
        ids[row, keep:] = 0
        mask[row, keep:] = 0.0
    return ids.astype(np.int64), mask
