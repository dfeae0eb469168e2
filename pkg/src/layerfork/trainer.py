"""Single-task partial fine-tuning, seeded trials and L-search."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import encoder as enc
from . import tensor as T
from .checkpoint import Checkpoint
from .errors import DataError
from .metrics import evaluate_metric
from .optim import AdamState, adam_update
from .tasks import Dataset, TaskSpec, Vocab, batch_encode


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    batch_size: int = 32
    epochs: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.01
    seed: int = 0
    max_steps: int | None = None   # desk-scale override; None = run all epochs

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("lr", "batch_size", "epochs", "beta1", "beta2", "eps",
                 "weight_decay", "seed", "max_steps")}


@dataclass(frozen=True)
class SearchRange:
    n_min: int
    n_max: int

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise DataError(f"invalid search range [{self.n_min}, {self.n_max}]")


def predictions(store, cfg, head, dataset: Dataset, vocab: Vocab, batch_size=64):
    preds = []
    for lo in range(0, len(dataset), batch_size):
        chunk = dataset.examples[lo:lo + batch_size]
        ids, mask, _ = batch_encode(chunk, vocab, cfg.max_seq_len)
        out = enc.pool_and_head(store, enc.forward(store, cfg, ids, mask), head).data
        if head.kind == "classification":
            preds.extend(int(i) for i in out.argmax(axis=-1))
        else:
            preds.extend(float(v) for v in out)
    return preds


def evaluate(store, cfg, head, task: TaskSpec, dataset: Dataset, vocab: Vocab) -> float:
    preds = predictions(store, cfg, head, dataset, vocab)
    if task.head_kind == "classification":
        labels = [int(v) for v in dataset.labels()]
    else:
        labels = dataset.labels()
    return evaluate_metric(task.metric, preds, labels)


def _supervised_loss(store, cfg, head, batch, task):
    ids, mask, labels = batch
    logits = enc.pool_and_head(store, enc.forward(store, cfg, ids, mask), head)
    if task.head_kind == "classification":
        return T.cross_entropy(logits, labels.astype(np.int64))
    return T.mse(logits, T.Tensor(labels.astype(np.float32)))


def train_loop(store, cfg, head, task, train_ds, dev_ds, vocab, tcfg: TrainConfig,
               loss_fn=None):
    """Epoch loop with once-per-epoch dev evaluation; keeps best-epoch weights.

    Returns the best dev score.  `loss_fn(store, batch) -> Tensor` overrides
    the supervised objective (used for distillation).
    """
    if len(train_ds) == 0:
        raise DataError("empty training split")
    loss_fn = loss_fn or (lambda st, batch: _supervised_loss(st, cfg, head, batch, task))
    opt = AdamState(lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
                    eps=tcfg.eps, weight_decay=tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    best_score = evaluate(store, cfg, head, task, dev_ds, vocab)
    best_weights = {n: store[n].data.copy() for n in store.trainable_names()}
    step = 0
    budget = tcfg.max_steps
    for _ in range(tcfg.epochs):
        if budget is not None and step >= budget:
            break
        order = rng.permutation(len(train_ds))
        for lo in range(0, len(order), tcfg.batch_size):
            if budget is not None and step >= budget:
                break
            chunk = [train_ds.examples[i] for i in order[lo:lo + tcfg.batch_size]]
            batch = batch_encode(chunk, vocab, cfg.max_seq_len)
            with T.GradTape() as tape:
                loss = loss_fn(store, batch)
            grads = T.backward(tape, loss)
            adam_update(opt, store, grads)
            step += 1
        score = evaluate(store, cfg, head, task, dev_ds, vocab)
        if score > best_score:
            best_score = score
            best_weights = {n: store[n].data.copy() for n in store.trainable_names()}
    for n, data in best_weights.items():
        store[n].data = data
    return best_score


def partial_finetune(base: enc.ParamStore, cfg: enc.EncoderConfig, task: TaskSpec,
                     L: int, tcfg: TrainConfig, train_ds: Dataset, dev_ds: Dataset,
                     vocab: Vocab):
    """Fine-tune the top L layers of a copy of `base` on one task."""
    n = cfg.num_layers
    if not 0 <= L <= n:
        raise DataError(f"L={L} outside [0, {n}]")
    head = enc.TaskHead(task.head_kind,
                        task.num_classes if task.head_kind == "classification" else 1)
    store = base.clone()
    enc.add_head(store, head, seed=tcfg.seed)
    enc.set_frozen_depth(store, n - L)
    score = train_loop(store, cfg, head, task, train_ds, dev_ds, vocab, tcfg)
    ckpt = Checkpoint(cfg=cfg, frozen_depth=n - L, task_layers=L, task=task,
                      store=store, vocab=vocab.to_list())
    return ckpt, score


def run_seeded_trials(job, n_trials: int = 5, base_seed: int = 0):
    """Run `job(seed)` for seeds base_seed..base_seed+n-1; return the max-score
    trial, ties broken toward the lowest seed."""
    if n_trials < 1:
        raise DataError("n_trials must be >= 1")
    best = None
    for seed in range(base_seed, base_seed + n_trials):
        ckpt, score = job(seed)
        if best is None or score > best[1]:
            best = (ckpt, score, seed)
    return best[0], best[1]


def search_layer_count(scores: dict, search: SearchRange) -> int:
    """Best L in the range by dev score; ties resolved to the smallest L."""
    best_l, best_s = None, None
    for L in range(search.n_min, search.n_max + 1):
        if L not in scores:
            raise DataError(f"missing dev score for L={L}")
        s = scores[L]
        if best_s is None or s > best_s:
            best_l, best_s = L, s
    return best_l


def finetune_with_search(base, cfg, task, search: SearchRange, tcfg: TrainConfig,
                         train_ds, dev_ds, vocab, n_trials: int = 1):
    """Full L-search protocol: seeded trials per L, then argmax selection."""
    results = {}
    for L in range(search.n_min, search.n_max + 1):
        results[L] = run_seeded_trials(
            lambda seed: partial_finetune(base, cfg, task, L,
                                          replace(tcfg, seed=seed),
                                          train_ds, dev_ds, vocab),
            n_trials=n_trials, base_seed=tcfg.seed)
    scores = {L: r[1] for L, r in results.items()}
    best_l = search_layer_count(scores, search)
    return best_l, results[best_l][0], scores
