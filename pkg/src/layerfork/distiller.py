"""Vanilla knowledge distillation with student init from the teacher's
bottommost layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from . import tensor as T
from .checkpoint import Checkpoint
from .errors import DataError
from .tasks import Dataset, Vocab, batch_encode
from .trainer import TrainConfig, train_loop

DEFAULT_TEMPERATURE = 2.0
DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class StudentPlan:
    teacher: Checkpoint
    n: int                               # task-specific layer count in the student
    temperature: float = DEFAULT_TEMPERATURE
    alpha: float = DEFAULT_ALPHA         # weight of the hard-label loss term

    def __post_init__(self):
        if not 1 <= self.n <= self.teacher.task_layers:
            raise DataError(f"student layer count {self.n} outside "
                            f"[1, {self.teacher.task_layers}]")
        if self.temperature <= 0:
            raise DataError("temperature must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError("alpha must lie in [0, 1]")

    @property
    def student_layers(self) -> int:
        """Total layers in the student (frozen + task-specific)."""
        return self.teacher.frozen_depth + self.n


def build_student(plan: StudentPlan) -> Checkpoint:
    """Byte-copy the teacher's embeddings, bottommost layers, pooler and head."""
    teacher = plan.teacher
    n_s = plan.student_layers
    tensors = {}
    for name in teacher.store.names():
        idx = enc.layer_index(name)
        if idx is not None and idx > n_s:
            continue
        src = teacher.store[name]
        tensors[name] = T.parameter(src.data.copy(), name)
    store = enc.ParamStore(tensors, teacher.store.base_fingerprint)
    enc.set_frozen_depth(store, teacher.frozen_depth)
    return Checkpoint(cfg=teacher.cfg, frozen_depth=teacher.frozen_depth,
                      task_layers=plan.n, task=teacher.task, store=store,
                      vocab=list(teacher.vocab))


def kd_loss(student_out: T.Tensor, teacher_out: np.ndarray, gold: np.ndarray,
            head_kind: str, temperature: float = DEFAULT_TEMPERATURE,
            alpha: float = DEFAULT_ALPHA) -> T.Tensor:
    """Hinton-style distillation objective.

    Classification: alpha*CE(student, gold) +
    (1-alpha)*T^2*KL(softmax(teacher/T) || softmax(student/T)).
    Regression: alpha*MSE(student, gold) + (1-alpha)*MSE(student, teacher).
    """
    if temperature <= 0:
        raise DataError("temperature must be positive")
    if not 0.0 <= alpha <= 1.0:
        raise DataError("alpha must lie in [0, 1]")
    if head_kind == "classification":
        hard = T.cross_entropy(student_out, np.asarray(gold, dtype=np.int64))
        t_scaled = np.asarray(teacher_out, dtype=np.float64) / temperature
        t_scaled -= t_scaled.max(axis=-1, keepdims=True)
        p_t = np.exp(t_scaled)
        p_t /= p_t.sum(axis=-1, keepdims=True)
        batch = p_t.shape[0]
        logp_s = T.log_softmax(T.scale(student_out, 1.0 / temperature))
        soft_ce = T.scale(T.sum_all(T.mul(T.Tensor(p_t.astype(np.float32)), logp_s)),
                          -1.0 / batch)
        entropy = float((p_t * np.log(np.where(p_t > 0, p_t, 1.0))).sum() / batch)
        kl = T.add(soft_ce, T.Tensor(np.float32(entropy)))
        return T.add(T.scale(hard, alpha), T.scale(kl, (1.0 - alpha) * temperature ** 2))
    hard = T.mse(student_out, T.Tensor(np.asarray(gold, dtype=np.float32)))
    soft = T.mse(student_out, T.Tensor(np.asarray(teacher_out, dtype=np.float32)))
    return T.add(T.scale(hard, alpha), T.scale(soft, 1.0 - alpha))


def distill_train(plan: StudentPlan, tcfg: TrainConfig, train_ds: Dataset,
                  dev_ds: Dataset, vocab: Vocab, cache_teacher: bool = False):
    """Train the student on the task's own data against on-the-fly teacher
    targets; returns (student checkpoint, dev score)."""
    teacher = plan.teacher
    student = build_student(plan)
    head = student.head
    cfg = student.cfg
    cache = {}

    def teacher_logits(ids, mask):
        key = ids.tobytes() if cache_teacher else None
        if key is not None and key in cache:
            return cache[key]
        out = teacher.logits(ids, mask)
        if key is not None:
            cache[key] = out
        return out

    def loss_fn(store, batch):
        ids, mask, labels = batch
        s_out = enc.pool_and_head(store, enc.forward(store, cfg, ids, mask), head)
        t_out = teacher_logits(ids, mask)
        return kd_loss(s_out, t_out, labels, teacher.task.head_kind,
                       plan.temperature, plan.alpha)

    score = train_loop(student.store, cfg, head, teacher.task, train_ds, dev_ds,
                       vocab, tcfg, loss_fn=loss_fn)
    return student, score
