"""Tokenization, padding inertness, block behavior, and the pyramid fuser."""
import numpy as np
import pytest

from phishdom.errors import InputError
from phishdom.nn import Tensor, no_grad, ops
from phishdom.url_encoder import (
    CLS_TOKEN,
    PAD_TOKEN,
    PyramidFuser,
    UrlEncoder,
    tokenize,
)

from pyramid_oracle import straight_line_pyramid


class TestTokenize:
    def test_single_character(self):
        np.testing.assert_array_equal(tokenize("a"), [CLS_TOKEN, 97])

    def test_padding_appends_pad_tokens(self):
        toks = tokenize("ab", pad_to=6)
        np.testing.assert_array_equal(
            toks, [CLS_TOKEN, 97, 98, PAD_TOKEN, PAD_TOKEN, PAD_TOKEN]
        )

    def test_no_case_folding(self):
        assert not np.array_equal(tokenize("A"), tokenize("a"))

    def test_confusable_characters_stay_distinct(self):
        # Cyrillic small a is multi-byte in UTF-8 and never collapses to ASCII a.
        latin, cyrillic = tokenize("paypal.com"), tokenize("pаypal.com")
        assert len(cyrillic) == len(latin) + 1
        assert not np.array_equal(latin, cyrillic)

    def test_long_url_truncated_to_max_len(self):
        toks = tokenize("x" * 500, max_len=200)
        assert len(toks) == 200
        assert toks[0] == CLS_TOKEN
        assert PAD_TOKEN not in toks

    def test_empty_url_is_just_cls(self):
        np.testing.assert_array_equal(tokenize(""), [CLS_TOKEN])

    def test_pad_beyond_max_len_rejected(self):
        with pytest.raises(InputError):
            tokenize("a", max_len=10, pad_to=11)


def small_encoder(seed=0, **kw):
    defaults = dict(dim=16, num_layers=4, max_len=64)
    defaults.update(kw)
    return UrlEncoder(np.random.default_rng(seed), **defaults)


class TestEncoderStack:
    def test_stack_shape(self):
        enc = small_encoder().eval()
        with no_grad():
            stack, mask = enc.encode_layers(tokenize("http://x.com"))
        assert stack.shape == (4, 13, 16)
        assert mask.all()

    def test_layers_differ(self):
        enc = small_encoder().eval()
        with no_grad():
            stack, _ = enc.encode_layers(tokenize("http://example.com"))
        assert np.abs(stack.data[0] - stack.data[1]).max() > 1e-6

    def test_character_order_matters(self):
        enc = small_encoder().eval()
        with no_grad():
            a = enc.fusion_tokens(tokenize("ab.com")).data
            b = enc.fusion_tokens(tokenize("ba.com")).data
        assert np.abs(a - b).max() > 1e-6

    def test_padding_is_inert(self):
        enc = small_encoder().eval()
        url = "http://login-example.com/a"
        with no_grad():
            bare = enc.fusion_tokens(tokenize(url)).data
            pad40 = enc.fusion_tokens(tokenize(url, max_len=64, pad_to=40)).data
            pad64 = enc.fusion_tokens(tokenize(url, max_len=64, pad_to=64)).data
        np.testing.assert_allclose(bare, pad40, atol=1e-9)
        np.testing.assert_allclose(bare, pad64, atol=1e-9)

    def test_pad_rows_stay_zero_through_stack(self):
        enc = small_encoder().eval()
        toks = tokenize("abc", pad_to=20)
        with no_grad():
            stack, mask = enc.encode_layers(toks)
        np.testing.assert_array_equal(stack.data[:, ~mask, :], 0.0)

    def test_eval_is_deterministic(self):
        enc = small_encoder().eval()
        with no_grad():
            a = enc.fusion_tokens(tokenize("http://x.com/q")).data
            b = enc.fusion_tokens(tokenize("http://x.com/q")).data
        np.testing.assert_array_equal(a, b)

    def test_train_mode_dropout_changes_output(self):
        enc = small_encoder()
        a = enc.fusion_tokens(tokenize("http://x.com/q")).data
        b = enc.fusion_tokens(tokenize("http://x.com/q")).data
        assert np.abs(a - b).max() > 1e-9

    def test_fusion_tokens_shape_is_layers_plus_one(self):
        enc = small_encoder().eval()
        with no_grad():
            out = enc.fusion_tokens(tokenize("http://x.com"))
        assert out.shape == (5, 16)

    def test_single_character_url_encodes(self):
        enc = small_encoder().eval()
        with no_grad():
            out = enc.fusion_tokens(tokenize("a"))
        assert out.shape == (5, 16)
        assert np.all(np.isfinite(out.data))

    def test_overlong_sequence_rejected(self):
        enc = small_encoder()
        with pytest.raises(InputError):
            enc.encode_layers(np.full(65, CLS_TOKEN, dtype=np.int64))

    def test_gradients_reach_used_embeddings_only(self):
        enc = small_encoder()
        enc.eval()
        toks = tokenize("ab", pad_to=10)
        out = enc.fusion_tokens(toks)
        ops.tensor_sum(out).backward()
        grad = enc.embedding.grad
        for used in (CLS_TOKEN, 97, 98):
            assert np.abs(grad[used]).sum() > 0
        np.testing.assert_array_equal(grad[PAD_TOKEN], 0.0)


class TestPyramid:
    def test_matches_straight_line_composition(self):
        rng = np.random.default_rng(0)
        pyr = PyramidFuser(np.random.default_rng(1), dim=6)
        stack = rng.standard_normal((4, 11, 6))
        with no_grad():
            out = pyr(Tensor(stack), content_len=9).data
        np.testing.assert_allclose(out, straight_line_pyramid(pyr, stack, 9), atol=1e-12)

    def test_zeroed_convs_reduce_to_top_layer_mean(self):
        # With every conv parameter zero the refined map is zero, the gate is
        # irrelevant, and the residual passes the raw stack straight through.
        rng = np.random.default_rng(2)
        pyr = PyramidFuser(np.random.default_rng(3), dim=5)
        for conv in [pyr.stem, *pyr.branches]:
            conv.depthwise.data[:] = 0.0
            conv.pointwise.data[:] = 0.0
            conv.bias.data[:] = 0.0
        stack = rng.standard_normal((4, 8, 5))
        with no_grad():
            out = pyr(Tensor(stack), content_len=8).data
        np.testing.assert_allclose(out, stack[3].mean(axis=0), atol=1e-12)

    def test_gate_values_lie_in_unit_interval(self):
        rng = np.random.default_rng(4)
        pyr = PyramidFuser(np.random.default_rng(5), dim=6)
        stack = rng.standard_normal((4, 10, 6))
        with no_grad():
            base = Tensor(np.transpose(stack[:, :10, :], (2, 0, 1)))
            x = pyr.stem(base)
            summed = x
            for branch in pyr.branches:
                summed = ops.add(summed, branch(x))
            pooled = [
                ops.reshape(ops.adaptive_avg_pool2d(summed, k), (6, k * k))
                for k in pyr.pool_sizes
            ]
            desc = ops.reshape(ops.concat(pooled, axis=1), (1, -1))
            gate = ops.sigmoid(pyr.fc2(ops.relu(pyr.fc1(desc)))).data
        assert np.all(gate > 0.0) and np.all(gate < 1.0)

    def test_short_stack_padded_with_zero_layers(self):
        rng = np.random.default_rng(6)
        pyr = PyramidFuser(np.random.default_rng(7), dim=4)
        stack = rng.standard_normal((2, 7, 4))
        with no_grad():
            out = pyr(Tensor(stack), content_len=7)
        assert out.shape == (4,)
        assert np.all(np.isfinite(out.data))

    def test_content_shorter_than_pool_grid_is_zero_extended(self):
        rng = np.random.default_rng(8)
        pyr = PyramidFuser(np.random.default_rng(9), dim=4)
        short = rng.standard_normal((4, 2, 4))
        widened = np.concatenate([short, np.zeros((4, 30, 4))], axis=1)
        with no_grad():
            a = pyr(Tensor(short), content_len=2).data
            b = pyr(Tensor(widened), content_len=2).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_gradient_reaches_all_parameters(self):
        rng = np.random.default_rng(10)
        pyr = PyramidFuser(np.random.default_rng(11), dim=5)
        stack = Tensor(rng.standard_normal((4, 9, 5)), requires_grad=True)
        ops.tensor_sum(pyr(stack, content_len=9)).backward()
        assert stack.grad is not None
        for name, p in pyr.named_parameters():
            assert p.grad is not None, name
