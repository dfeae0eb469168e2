"""Training loop, seeded trials and L-search."""

import numpy as np
import pytest

from layerfork import encoder as enc
from layerfork import fixtures_data
from layerfork.errors import DataError
from layerfork.tasks import Dataset
from layerfork.trainer import (SearchRange, TrainConfig, evaluate,
                               partial_finetune, run_seeded_trials,
                               search_layer_count)


def test_search_range_validation():
    with pytest.raises(DataError):
        SearchRange(0, 4)
    with pytest.raises(DataError):
        SearchRange(5, 4)


def test_search_layer_count_argmax_and_tie():
    scores = {4: 0.8, 5: 0.9, 6: 0.9, 7: 0.85}
    assert search_layer_count(scores, SearchRange(4, 7)) == 5  # tie -> smallest L
    with pytest.raises(DataError):
        search_layer_count(scores, SearchRange(4, 8))          # missing L=8


def test_search_layer_count_on_bundled_sweep():
    scores, search = fixtures_data.load_table1()
    assert search_layer_count(scores["mnli"], search) == 8     # documented tie
    assert search_layer_count(scores["sst2"], search) == 6


def test_run_seeded_trials_picks_max_then_lowest_seed():
    outcomes = {0: 0.7, 1: 0.9, 2: 0.9, 3: 0.8}
    chosen, score = run_seeded_trials(lambda s: (f"ckpt{s}", outcomes[s]),
                                      n_trials=4, base_seed=0)
    assert (chosen, score) == ("ckpt1", 0.9)
    with pytest.raises(DataError):
        run_seeded_trials(lambda s: (None, 0.0), n_trials=0)


def test_partial_finetune_validates_l(toy_cfg, toy_base, keyword_data):
    spec, train_ds, dev_ds, vocab = keyword_data
    with pytest.raises(DataError):
        partial_finetune(toy_base, toy_cfg, spec, toy_cfg.num_layers + 1,
                         TrainConfig(), train_ds, dev_ds, vocab)


def test_empty_train_split_rejected(toy_cfg, toy_base, keyword_data):
    spec, _, dev_ds, vocab = keyword_data
    with pytest.raises(DataError):
        partial_finetune(toy_base, toy_cfg, spec, 2, TrainConfig(),
                         Dataset([], "train"), dev_ds, vocab)


def test_zero_step_budget_keeps_initial_weights(toy_cfg, toy_base, keyword_data):
    spec, train_ds, dev_ds, vocab = keyword_data
    tcfg = TrainConfig(seed=0, max_steps=0)
    ckpt, score = partial_finetune(toy_base, toy_cfg, spec, 2, tcfg,
                                   train_ds, dev_ds, vocab)
    for name in toy_base.names():
        np.testing.assert_array_equal(ckpt.store[name].data, toy_base[name].data)
    assert score == evaluate(ckpt.store, toy_cfg, ckpt.head, spec, dev_ds, vocab)


def test_partial_finetune_trains_and_freezes(toy_cfg, toy_base, keyword_data):
    spec, train_ds, dev_ds, vocab = keyword_data
    tcfg = TrainConfig(lr=1e-3, batch_size=16, epochs=15, seed=0)
    ckpt, score = partial_finetune(toy_base, toy_cfg, spec, 2, tcfg,
                                   train_ds, dev_ds, vocab)
    assert ckpt.frozen_depth == 2 and ckpt.task_layers == 2
    assert score > 0.9
    assert ckpt.verify_frozen_against_base() == []
    # base itself is untouched
    assert toy_base.hashes(enc.base_tensor_names(toy_base)) == toy_base.base_fingerprint
    # top layers actually moved
    assert ckpt.store.tensor_hash("layer.3.ffn.in.weight") != \
        toy_base.hashes(["layer.3.ffn.in.weight"])["layer.3.ffn.in.weight"]


def test_training_is_seed_deterministic(toy_cfg, toy_base, keyword_data):
    spec, train_ds, dev_ds, vocab = keyword_data
    tcfg = TrainConfig(lr=1e-3, batch_size=16, epochs=2, seed=7)
    a, sa = partial_finetune(toy_base, toy_cfg, spec, 2, tcfg, train_ds, dev_ds, vocab)
    b, sb = partial_finetune(toy_base, toy_cfg, spec, 2, tcfg, train_ds, dev_ds, vocab)
    assert sa == sb
    for name in a.store.names():
        np.testing.assert_array_equal(a.store[name].data, b.store[name].data)
