"""Distillation: student construction, loss oracle, training behaviour."""

import math

import numpy as np
import pytest

from layerfork import encoder as enc
from layerfork import tensor as T
from layerfork.distiller import StudentPlan, build_student, distill_train, kd_loss
from layerfork.errors import DataError
from layerfork.tasks import synth_task, build_vocab
from layerfork.trainer import TrainConfig, partial_finetune

from conftest import fake_finetune, toy_task


@pytest.fixture(scope="module")
def teacher(toy_cfg, toy_base):
    return fake_finetune(toy_base, toy_cfg, toy_task("kd-demo"), frozen_depth=2,
                         seed=3)


def test_plan_validation(teacher):
    with pytest.raises(DataError):
        StudentPlan(teacher, n=0)
    with pytest.raises(DataError):
        StudentPlan(teacher, n=teacher.task_layers + 1)
    with pytest.raises(DataError):
        StudentPlan(teacher, n=1, temperature=0.0)
    with pytest.raises(DataError):
        StudentPlan(teacher, n=1, alpha=1.5)
    assert StudentPlan(teacher, n=1).student_layers == 3


def test_build_student_copies_bottommost_layers(teacher):
    student = build_student(StudentPlan(teacher, n=1))
    assert student.frozen_depth == 2 and student.task_layers == 1
    assert student.store.num_layers() == 3
    assert "layer.4.attn.q.weight" not in student.store
    for name in student.store.names():
        np.testing.assert_array_equal(student.store[name].data,
                                      teacher.store[name].data)
    # the student's own copy: mutating it must not touch the teacher
    student.store["layer.3.ffn.in.weight"].data[0, 0] += 1.0
    assert not np.array_equal(student.store["layer.3.ffn.in.weight"].data,
                              teacher.store["layer.3.ffn.in.weight"].data)
    assert student.verify_frozen_against_base() == []


def test_build_student_n_equals_teacher_is_copy(teacher):
    student = build_student(StudentPlan(teacher, n=teacher.task_layers))
    assert sorted(student.store.names()) == sorted(teacher.store.names())
    for name in student.store.names():
        np.testing.assert_array_equal(student.store[name].data,
                                      teacher.store[name].data)


def test_kd_loss_oracle_pure_soft():
    """alpha=0, T=1: the loss is KL(p_t || p_s).  With student logits [0, 0]
    (p_s uniform) and teacher [ln 3, 0] (p_t = [3/4, 1/4]), KL = ln 2 -
    H([3/4, 1/4]) ~= 0.13081."""
    student = T.Tensor(np.zeros((1, 2), dtype=np.float32))
    teacher = np.array([[math.log(3.0), 0.0]], dtype=np.float32)
    loss = kd_loss(student, teacher, np.array([0]), "classification",
                   temperature=1.0, alpha=0.0)
    want = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    np.testing.assert_allclose(loss.item(), want, atol=1e-5)
    np.testing.assert_allclose(loss.item(), 0.13081, atol=1e-4)


def test_kd_loss_alpha_one_is_supervised():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((4, 3)).astype(np.float32)
    gold = np.array([0, 2, 1, 1])
    loss = kd_loss(T.Tensor(logits), rng.standard_normal((4, 3)), gold,
                   "classification", alpha=1.0)
    want = T.cross_entropy(T.Tensor(logits), gold).item()
    np.testing.assert_allclose(loss.item(), want, rtol=1e-5)


def test_kd_loss_soft_term_zero_when_distributions_match():
    logits = np.array([[1.0, -2.0, 0.5]], dtype=np.float32)
    loss = kd_loss(T.Tensor(logits), logits, np.array([0]), "classification",
                   temperature=2.0, alpha=0.0)
    np.testing.assert_allclose(loss.item(), 0.0, atol=1e-6)


def test_kd_loss_temperature_squared_scaling():
    student = T.Tensor(np.array([[0.0, 1.0]], dtype=np.float32))
    teacher = np.array([[2.0, -1.0]], dtype=np.float32)
    # at T -> large the scaled distributions flatten; just check the exact
    # T^2 factor by comparing against the hand-built soft term
    tt = 2.0
    p_t = np.exp(teacher / tt) / np.exp(teacher / tt).sum()
    logp_s = (student.data / tt) - np.log(np.exp(student.data / tt).sum())
    kl = float((p_t * (np.log(p_t) - logp_s)).sum())
    loss = kd_loss(student, teacher, np.array([0]), "classification",
                   temperature=tt, alpha=0.0)
    np.testing.assert_allclose(loss.item(), tt * tt * kl, rtol=1e-5)


def test_kd_loss_regression_mix():
    pred = T.Tensor(np.array([1.0, 2.0], dtype=np.float32))
    gold = np.array([0.0, 0.0], dtype=np.float32)
    teach = np.array([1.0, 2.0], dtype=np.float32)
    loss = kd_loss(pred, teach, gold, "regression", alpha=0.25)
    np.testing.assert_allclose(loss.item(), 0.25 * 2.5, rtol=1e-5)


def test_kd_loss_validation():
    s = T.Tensor(np.zeros((1, 2), dtype=np.float32))
    with pytest.raises(DataError):
        kd_loss(s, np.zeros((1, 2)), np.array([0]), "classification", temperature=0)
    with pytest.raises(DataError):
        kd_loss(s, np.zeros((1, 2)), np.array([0]), "classification", alpha=2.0)


def test_distill_train_end_to_end(toy_cfg, toy_base):
    spec, train_ds, dev_ds = synth_task("keyword", seed=0, train_size=128,
                                        dev_size=64)
    vocab = build_vocab(train_ds)
    tcfg = TrainConfig(lr=1e-3, batch_size=16, epochs=15, seed=0)
    teacher, t_score = partial_finetune(toy_base, toy_cfg, spec, 2, tcfg,
                                        train_ds, dev_ds, vocab)
    assert t_score > 0.9
    student, s_score = distill_train(StudentPlan(teacher, n=1), tcfg,
                                     train_ds, dev_ds, vocab, cache_teacher=True)
    assert student.num_model_layers == 3
    assert s_score > 0.9
    assert student.verify_frozen_against_base() == []
    # teacher untouched by student training
    assert teacher.verify_frozen_against_base() == []
