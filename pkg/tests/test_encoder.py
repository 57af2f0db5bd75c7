"""Tests for the shared transformer encoder."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hofmtl.autodiff import Tape, apply, backward
from hofmtl.encoder import EncoderConfig, EncoderParams, encode_batch, init_params, parameter_layout
from hofmtl.errors import ConfigurationError, ContractError, SequenceLengthError, VocabularyError
from tests.helpers import random_batch, tiny_config

VOCAB_SIZE = 40


@pytest.fixture
def params() -> EncoderParams:
    """Two-layer tiny encoder parameters."""
    return init_params(tiny_config(VOCAB_SIZE, num_layers=2))


class TestConfig:
    """Dimension validation."""

    def test_hidden_must_divide_into_heads(self) -> None:
        """Heads split the hidden width evenly."""
        with pytest.raises(ConfigurationError, match="divisible"):
            EncoderConfig(vocab_size=10, hidden_dim=10, num_heads=4)

    @pytest.mark.parametrize("field", ["vocab_size", "num_layers", "hidden_dim", "ffn_dim", "max_len"])
    def test_sizes_must_be_positive(self, field: str) -> None:
        """Zero is not a size."""
        values = {"vocab_size": 10, field: 0}
        with pytest.raises(ConfigurationError, match=field):
            EncoderConfig(**values)

    def test_dropout_rate_of_one_is_rejected(self) -> None:
        """Dropout must keep something."""
        with pytest.raises(ConfigurationError, match="dropout_rate"):
            EncoderConfig(vocab_size=10, dropout_rate=1.0)

    def test_from_mapping_rejects_unknown_keys(self) -> None:
        """Typos surface as configuration errors."""
        with pytest.raises(ConfigurationError, match="'layers'"):
            EncoderConfig.from_mapping({"vocab_size": 10, "layers": 2})

    def test_dict_round_trip(self) -> None:
        """to_dict feeds back into from_mapping."""
        config = tiny_config(VOCAB_SIZE)
        assert EncoderConfig.from_mapping(config.to_dict()) == config


class TestParams:
    """Initialization and the parameter layout."""

    def test_init_is_deterministic(self) -> None:
        """The same config gives bit-identical weights."""
        a = init_params(tiny_config(VOCAB_SIZE))
        b = init_params(tiny_config(VOCAB_SIZE))
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_seed_changes_weights(self) -> None:
        """A different seed gives different weights."""
        a = init_params(tiny_config(VOCAB_SIZE, seed=0))
        b = init_params(tiny_config(VOCAB_SIZE, seed=1))
        assert not np.array_equal(a["embeddings.token"].data, b["embeddings.token"].data)

    def test_fills_and_dtype(self, params: EncoderParams) -> None:
        """Norm scales start at one, biases at zero, everything in float32."""
        assert all(params[name].dtype == np.float32 for name in params)
        np.testing.assert_array_equal(params["layers.0.ffn.norm.scale"].data, 1.0)
        np.testing.assert_array_equal(params["pooler.bias"].data, 0.0)
        assert abs(float(params["embeddings.token"].data.std()) - 0.02) < 0.005

    def test_layout_covers_every_layer(self) -> None:
        """Four embedding tensors, fifteen per layer and two for the pooler."""
        assert len(parameter_layout(tiny_config(VOCAB_SIZE, num_layers=3))) == 4 + 15 * 3 + 2

    def test_non_finite_weights_are_rejected(self) -> None:
        """NaN in a parameter is a configuration error."""
        config = tiny_config(VOCAB_SIZE)
        arrays = {name: t.data for name, t in init_params(config).tensors.items()}
        arrays["pooler.bias"] = np.full(8, np.nan, dtype=np.float32)
        with pytest.raises(ConfigurationError, match="non-finite"):
            EncoderParams.from_arrays(config, arrays)


class TestForward:
    """encode_batch behaviour."""

    def test_output_shapes(self, params: EncoderParams) -> None:
        """Sequence output is B x L x H, pooled is B x H in (-1, 1)."""
        ids, mask = random_batch(np.random.default_rng(0), VOCAB_SIZE, 3, 5)
        sequence, pooled = encode_batch(params, ids, mask, train_mode=False)
        assert sequence.shape == (3, 5, 8)
        assert pooled.shape == (3, 8)
        assert np.all(np.abs(pooled.data) < 1.0)

    def test_padding_invariance(self, params: EncoderParams) -> None:
        """Token ids under a zero mask do not reach the pooled output."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            ids, mask = random_batch(rng, VOCAB_SIZE, 4, 8)
            scrambled = np.where(mask == 1, ids, rng.integers(0, VOCAB_SIZE, size=ids.shape))
            _, clean = encode_batch(params, ids, mask, train_mode=False)
            _, noisy = encode_batch(params, scrambled, mask, train_mode=False)
            assert np.max(np.abs(clean.data - noisy.data)) < 1e-6

    def test_eval_mode_is_deterministic(self) -> None:
        """Without training mode dropout is off, even with a positive rate."""
        params = init_params(tiny_config(VOCAB_SIZE, dropout_rate=0.5))
        ids, mask = random_batch(np.random.default_rng(0), VOCAB_SIZE, 2, 6)
        _, a = encode_batch(params, ids, mask, train_mode=False)
        _, b = encode_batch(params, ids, mask, train_mode=False, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a.data, b.data)

    def test_train_mode_dropout_follows_the_rng(self) -> None:
        """Same generator seed, same dropout; different seed, different output."""
        params = init_params(tiny_config(VOCAB_SIZE, dropout_rate=0.5))
        ids, mask = random_batch(np.random.default_rng(0), VOCAB_SIZE, 2, 6)
        _, a = encode_batch(params, ids, mask, train_mode=True, rng=np.random.default_rng(3))
        _, b = encode_batch(params, ids, mask, train_mode=True, rng=np.random.default_rng(3))
        _, c = encode_batch(params, ids, mask, train_mode=True, rng=np.random.default_rng(4))
        np.testing.assert_array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_sequence_longer_than_positions(self, params: EncoderParams) -> None:
        """L past max_len is a length error."""
        ids = np.ones((1, 9), dtype=np.int64)
        with pytest.raises(SequenceLengthError, match="max_len 8"):
            encode_batch(params, ids, np.ones_like(ids), train_mode=False)

    def test_id_outside_vocabulary(self, params: EncoderParams) -> None:
        """An id equal to vocab_size is rejected."""
        ids = np.array([[2, VOCAB_SIZE]])
        with pytest.raises(VocabularyError):
            encode_batch(params, ids, np.ones_like(ids), train_mode=False)

    def test_mask_shape_must_match(self, params: EncoderParams) -> None:
        """ids and mask are matching matrices."""
        with pytest.raises(ContractError):
            encode_batch(params, np.ones((2, 3), dtype=np.int64), np.ones((2, 4)), train_mode=False)

    def test_every_parameter_receives_a_gradient(self, params: EncoderParams) -> None:
        """A loss on the pooled output reaches the whole encoder."""
        ids, mask = random_batch(np.random.default_rng(1), VOCAB_SIZE, 3, 6)
        with Tape() as tape:
            _, pooled = encode_batch(params, ids, mask, train_mode=False)
            loss = apply("mean", [pooled])
        grads = backward(loss, tape)
        assert {params[name].id for name in params} <= set(grads)


class TestHandWorked:
    """One layer, one head, two positions, two hidden units, every weight chosen by hand."""

    @staticmethod
    def _params() -> EncoderParams:
        config = EncoderConfig(
            vocab_size=3, num_layers=1, hidden_dim=2, num_heads=1, ffn_dim=2, max_len=2, dropout_rate=0.0
        )
        arrays = {name: np.zeros(shape) for name, shape, _ in parameter_layout(config)}
        eye = np.eye(2)
        arrays["embeddings.token"] = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        for name in ("query", "key", "output"):
            arrays[f"layers.0.attention.{name}.weight"] = eye
        arrays["layers.0.attention.value.weight"] = -3.0 * eye
        arrays["layers.0.ffn.inner.weight"] = eye
        arrays["layers.0.ffn.outer.weight"] = eye
        for norm in ("embeddings.norm", "layers.0.attention.norm"):
            arrays[f"{norm}.scale"] = np.ones(2)
        arrays["layers.0.ffn.norm.scale"] = np.array([2.0, 3.0])
        arrays["layers.0.ffn.norm.shift"] = np.array([0.5, -0.5])
        arrays["pooler.weight"] = 0.5 * eye
        arrays["pooler.bias"] = np.array([0.0, 0.25])
        return EncoderParams.from_arrays(config, arrays)

    def test_forward_pass_matches_the_worked_values(self) -> None:
        """Attention flips the residual's sign; the norms and pooler give exact numbers."""
        # Embedding norm: rows [1, 0] and [0, 1] become [1, -1] and [-1, 1].
        # Scores are +-2/sqrt(2), so each position keeps s = sigmoid(2 sqrt 2) of itself.
        s = 1.0 / (1.0 + math.exp(-2.0 * math.sqrt(2.0)))
        # The value weight is -3I, so the residual is (1 - 3(2s - 1)) times the input: negative.
        assert 1.0 - 3.0 * (2.0 * s - 1.0) < 0.0
        # After the attention norm: [-1, 1] and [1, -1]. Adding gelu keeps each row's order,
        # so the feed-forward norm sees the same signs and applies scale [2, 3], shift [0.5, -0.5].
        expected_sequence = np.array([[[-1.5, 2.5], [2.5, -3.5]]])
        expected_pooled = np.tanh(np.array([[-0.75, 1.5]]))
        sequence, pooled = encode_batch(self._params(), [[1, 2]], [[1, 1]], train_mode=False)
        np.testing.assert_allclose(sequence.data, expected_sequence, atol=1e-5)
        np.testing.assert_allclose(pooled.data, expected_pooled, atol=1e-5)

    def test_masked_key_is_ignored(self) -> None:
        """With the second position masked, the first attends only to itself."""
        _, pooled = encode_batch(self._params(), [[1, 2]], [[1, 0]], train_mode=False)
        # Self-attention only: the residual factor is 1 - 3 = -2, the same sign as before.
        np.testing.assert_allclose(pooled.data, np.tanh(np.array([[-0.75, 1.5]])), atol=1e-5)
