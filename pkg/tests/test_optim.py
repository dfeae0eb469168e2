"""Adam with decoupled weight decay."""

import numpy as np
import pytest

from layerfork import encoder as enc
from layerfork import tensor as T
from layerfork.errors import LayerforkError
from layerfork.optim import AdamState, adam_update, decays_weight


class Store:
    """Minimal ParamStore stand-in for optimizer unit tests."""

    def __init__(self, tensors):
        self._tensors = tensors

    def __getitem__(self, name):
        return self._tensors[name]

    def trainable_names(self):
        return {n for n, t in self._tensors.items() if t.requires_grad}


def test_decays_weight_naming_rule():
    assert decays_weight("layer.1.attn.q.weight")
    assert decays_weight("head.weight")
    assert not decays_weight("layer.1.attn.q.bias")
    assert not decays_weight("layer.2.ln1.gamma")
    assert not decays_weight("embed.ln.beta")


def test_first_step_magnitude():
    """With one step, m_hat/(sqrt(v_hat)+eps) ~= sign(g), so each weight
    moves by ~lr (plus decoupled decay for matrix weights)."""
    w = T.parameter(np.array([1.0], dtype=np.float32), "head.weight")
    b = T.parameter(np.array([1.0], dtype=np.float32), "head.bias")
    state = AdamState(lr=2e-5, eps=0.0, weight_decay=0.0)
    adam_update(state, Store({"head.weight": w, "head.bias": b}),
                {"head.weight": np.array([0.5], dtype=np.float32),
                 "head.bias": np.array([-0.5], dtype=np.float32)})
    np.testing.assert_allclose(w.data, [1.0 - 2e-5], atol=1e-9)
    np.testing.assert_allclose(b.data, [1.0 + 2e-5], atol=1e-9)
    assert state.t == 1


def test_weight_decay_decoupled_and_skips_bias():
    w = T.parameter(np.array([1.0], dtype=np.float32), "head.weight")
    b = T.parameter(np.array([1.0], dtype=np.float32), "head.bias")
    state = AdamState(lr=0.1, eps=1e-8, weight_decay=0.5)
    zero = {"head.weight": np.zeros(1, dtype=np.float32),
            "head.bias": np.zeros(1, dtype=np.float32)}
    adam_update(state, Store({"head.weight": w, "head.bias": b}), zero)
    # zero gradient: the only motion is lr * wd * w on the matrix weight
    np.testing.assert_allclose(w.data, [1.0 - 0.1 * 0.5], atol=1e-7)
    np.testing.assert_allclose(b.data, [1.0], atol=1e-7)


def test_gradient_set_must_match_trainables():
    w = T.parameter(np.ones(1, dtype=np.float32), "w")
    frozen = T.parameter(np.ones(1, dtype=np.float32), "f", trainable=False)
    store = Store({"w": w, "f": frozen})
    state = AdamState()
    with pytest.raises(LayerforkError):
        adam_update(state, store, {})                       # missing w
    with pytest.raises(LayerforkError):
        adam_update(state, store, {"w": np.ones(1), "f": np.ones(1)})
    with pytest.raises(LayerforkError):
        adam_update(state, store, {"w": np.ones(2, dtype=np.float32)})


def test_converges_on_quadratic():
    w = T.parameter(np.array([4.0], dtype=np.float32), "w")
    store = Store({"w": w})
    state = AdamState(lr=0.1, weight_decay=0.0)
    for _ in range(200):
        adam_update(state, store, {"w": (2.0 * w.data).astype(np.float32)})
    np.testing.assert_allclose(w.data, [0.0], atol=1e-2)


def test_state_tracks_moments_per_parameter():
    w = T.parameter(np.ones(3, dtype=np.float32), "w")
    state = AdamState(lr=1e-3)
    adam_update(state, Store({"w": w}), {"w": np.ones(3, dtype=np.float32)})
    assert set(state.m) == {"w"} and set(state.v) == {"w"}
    assert state.m["w"].shape == (3,)
