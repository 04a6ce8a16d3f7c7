"""Context encoders: single-instance semantics vs oracles, batched parity."""

import numpy as np
import pytest

from codecomplete import context_encoders as ce
from codecomplete import tensor as T


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_oracle(xs: np.ndarray, wi, wh, bi, bh) -> np.ndarray:
    """Step-by-step reference recurrence (gate order r, z, n)."""
    h = np.zeros(wh.shape[0], dtype=xs.dtype)
    hsz = wh.shape[0]
    for x in xs:
        gi = x @ wi + bi
        gh = h @ wh + bh
        r = sigmoid(gi[:hsz] + gh[:hsz])
        z = sigmoid(gi[hsz:2 * hsz] + gh[hsz:2 * hsz])
        n = np.tanh(gi[2 * hsz:] + r * gh[2 * hsz:])
        h = (1 - z) * n + z * h
    return h


def gru_params(model, prefix=""):
    return (getattr(model, prefix + "w_input").data,
            getattr(model, prefix + "w_hidden").data,
            getattr(model, prefix + "b_input").data,
            getattr(model, prefix + "b_hidden").data)


class TestGru:
    def setup_method(self):
        self.rng = np.random.default_rng(42)
        self.model = ce.fit_context_encoder("gru", hidden=6, input_dim=4,
                                            rng=self.rng)

    def test_matches_oracle_loop(self):
        xs = self.rng.normal(size=(9, 4)).astype(np.float32)
        out = ce.encode_context_gru(self.model, T.Tensor(xs))
        np.testing.assert_allclose(out.data, gru_oracle(xs, *gru_params(self.model)),
                                   rtol=1e-5, atol=1e-6)

    def test_length_one_is_single_cell_application(self):
        xs = self.rng.normal(size=(1, 4)).astype(np.float32)
        out = ce.encode_context_gru(self.model, T.Tensor(xs))
        np.testing.assert_allclose(out.data, gru_oracle(xs, *gru_params(self.model)),
                                   rtol=1e-6)

    def test_zero_parameters_give_zero_state(self):
        for _, p in self.model.parameters():
            p.data[...] = 0.0
        xs = self.rng.normal(size=(5, 4)).astype(np.float32)
        out = ce.encode_context_gru(self.model, T.Tensor(xs))
        np.testing.assert_array_equal(out.data, np.zeros(6, dtype=np.float32))

    def test_hidden_components_bounded(self):
        xs = (self.rng.normal(size=(30, 4)) * 50).astype(np.float32)
        out = ce.encode_context_gru(self.model, T.Tensor(xs))
        assert np.all(np.abs(out.data) < 1.0)

    def test_empty_context_rejected(self):
        with pytest.raises(T.ShapeError):
            ce.encode_context_gru(self.model, T.Tensor(np.zeros((0, 4))))

    def test_gradients_match_finite_differences(self):
        xs = np.random.default_rng(1).normal(size=(4, 3)).astype(np.float32)
        model = ce.fit_context_encoder("gru", hidden=4, input_dim=3,
                                       rng=np.random.default_rng(2))

        def build(params):
            for (name, _), p in zip(model.parameters(), params):
                setattr(model, name, p)
            return T.reduce_sum(ce.encode_context_gru(model, T.constant(xs)))

        report = T.grad_check(build, [p for _, p in model.parameters()])
        assert report.passed, report


class TestBiGru:
    def setup_method(self):
        self.rng = np.random.default_rng(7)
        self.model = ce.fit_context_encoder("bigru", hidden=8, input_dim=3,
                                            rng=self.rng)

    def test_output_width(self):
        xs = self.rng.normal(size=(5, 3)).astype(np.float32)
        assert ce.encode_context_bigru(self.model, T.Tensor(xs)).shape == (8,)

    def test_equals_two_independent_gru_oracles(self):
        xs = self.rng.normal(size=(7, 3)).astype(np.float32)
        out = ce.encode_context_bigru(self.model, T.Tensor(xs))
        fwd = gru_oracle(xs, *gru_params(self.model, "fwd_"))
        bwd = gru_oracle(xs[::-1], *gru_params(self.model, "bwd_"))
        np.testing.assert_allclose(out.data, np.concatenate([fwd, bwd]),
                                   rtol=1e-5, atol=1e-6)

    def test_palindrome_with_tied_parameters(self):
        for name in ("w_input", "w_hidden", "b_input", "b_hidden"):
            getattr(self.model, "bwd_" + name).data[...] = \
                getattr(self.model, "fwd_" + name).data
        xs = self.rng.normal(size=(3, 3)).astype(np.float32)
        xs = np.concatenate([xs, xs[::-1]])  # palindromic sequence
        out = ce.encode_context_bigru(self.model, T.Tensor(xs))
        np.testing.assert_allclose(out.data[:4], out.data[4:], rtol=1e-5,
                                   atol=1e-6)

    def test_odd_hidden_rejected(self):
        with pytest.raises(ValueError, match="even"):
            ce.fit_context_encoder("bigru", hidden=5, input_dim=3,
                                   rng=self.rng)


class TestCnn:
    def setup_method(self):
        self.rng = np.random.default_rng(3)
        self.model = ce.fit_context_encoder("cnn", hidden=6, input_dim=4,
                                            rng=self.rng)

    @pytest.mark.parametrize("length", [1, 2, 5, 30])
    def test_output_width_any_length(self, length):
        xs = self.rng.normal(size=(length, 4)).astype(np.float32)
        assert ce.encode_context_cnn(self.model, T.Tensor(xs)).shape == (6,)

    def test_zero_pad_shift_leaves_features_unchanged(self):
        # with zero biases, all-zero windows contribute 0 ≤ any relu feature;
        # the base input leads with a receptive field of zeros so shifting
        # introduces no new mixed boundary windows
        self.model.conv1_b.data[...] = 0.0
        self.model.conv2_b.data[...] = 0.0
        xs = (self.rng.normal(size=(10, 4)) * 3).astype(np.float32)
        base_in = np.vstack([np.zeros((4, 4), np.float32), xs])
        shifted_in = np.vstack([np.zeros((7, 4), np.float32), xs])
        base = ce.encode_context_cnn(self.model, T.Tensor(base_in))
        shifted = ce.encode_context_cnn(self.model, T.Tensor(shifted_in))
        np.testing.assert_allclose(base.data, shifted.data, rtol=1e-6)

    def test_gradients_match_finite_differences(self):
        xs = np.random.default_rng(5).normal(size=(6, 3)).astype(np.float32)
        model = ce.fit_context_encoder("cnn", hidden=4, input_dim=3,
                                       rng=np.random.default_rng(5))

        def build(params):
            for (name, _), p in zip(model.parameters(), params):
                setattr(model, name, p)
            return T.reduce_sum(ce.encode_context_cnn(model, T.constant(xs)))

        report = T.grad_check(build, [p for _, p in model.parameters()],
                              max_entries_per_param=10)
        assert report.passed, report


class TestTransformer:
    def setup_method(self):
        self.rng = np.random.default_rng(11)
        self.model = ce.fit_context_encoder("transformer", hidden=8,
                                            input_dim=5, layers=1,
                                            rng=self.rng)

    def test_output_width_and_determinism(self):
        xs = self.rng.normal(size=(6, 5)).astype(np.float32)
        a = ce.encode_context_transformer(self.model, T.Tensor(xs))
        b = ce.encode_context_transformer(self.model, T.Tensor(xs))
        assert a.shape == (8,)
        np.testing.assert_array_equal(a.data, b.data)

    def test_attention_rows_sum_to_one(self):
        xs = self.rng.normal(size=(5, 5)).astype(np.float32)
        _, attns = ce.encode_context_transformer(self.model, T.Tensor(xs),
                                                 return_attention=True)
        assert attns  # one per (layer, head)
        for a in attns:
            np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-6)

    def test_single_token_input(self):
        xs = self.rng.normal(size=(1, 5)).astype(np.float32)
        out = ce.encode_context_transformer(self.model, T.Tensor(xs))
        assert out.shape == (8,) and np.all(np.isfinite(out.data))
        other = ce.encode_context_transformer(
            self.model, T.Tensor(xs + 1.0))
        assert not np.array_equal(out.data, other.data)

    def test_gradients_match_finite_differences(self):
        xs = np.random.default_rng(6).normal(size=(2, 3)).astype(np.float32)
        model = ce.fit_context_encoder("transformer", hidden=4, input_dim=3,
                                       layers=1, rng=np.random.default_rng(6))

        def build(params):
            for (name, _), p in zip(model.parameters(), params):
                setattr(model, name, p)
            return T.reduce_sum(
                ce.encode_context_transformer(model, T.constant(xs)))

        report = T.grad_check(build, [p for _, p in model.parameters()],
                              max_entries_per_param=6)
        assert report.passed, report


class TestBatchedParity:
    """The masked batched recurrence must agree with per-instance encoding."""

    @pytest.mark.parametrize("kind,hidden", [("gru", 6), ("bigru", 6)])
    def test_variable_length_batch(self, kind, hidden):
        rng = np.random.default_rng(13)
        model = ce.fit_context_encoder(kind, hidden=hidden, input_dim=4,
                                       rng=rng)
        lengths = [1, 4, 9, 2, 7]
        mats = [rng.normal(size=(n, 4)).astype(np.float32) for n in lengths]
        flat = T.Tensor(np.concatenate(mats, axis=0))
        batched = ce.encode_contexts_batched(model, flat, lengths)
        assert batched.shape == (5, hidden)
        for i, mat in enumerate(mats):
            single = ce.encode_context(model, T.Tensor(mat))
            np.testing.assert_allclose(batched.data[i], single.data,
                                       rtol=2e-5, atol=2e-6)

    def test_batched_gradients_match_finite_differences(self):
        rng = np.random.default_rng(17)
        model = ce.fit_context_encoder("gru", hidden=3, input_dim=2, rng=rng)
        mats = np.concatenate(
            [rng.normal(size=(n, 2)).astype(np.float32) for n in (2, 3, 1)])

        def build(params):
            for (name, _), p in zip(model.parameters(), params):
                setattr(model, name, p)
            out = ce.encode_contexts_batched(model, T.constant(mats), [2, 3, 1])
            return T.reduce_sum(out)

        report = T.grad_check(build, [p for _, p in model.parameters()])
        assert report.passed, report

    def test_loop_kinds_batch_via_fallback(self):
        rng = np.random.default_rng(19)
        model = ce.fit_context_encoder("cnn", hidden=4, input_dim=3, rng=rng)
        mats = [rng.normal(size=(n, 3)).astype(np.float32) for n in (2, 6)]
        flat = T.Tensor(np.concatenate(mats))
        batched = ce.encode_contexts_batched(model, flat, [2, 6])
        for i, mat in enumerate(mats):
            np.testing.assert_allclose(
                batched.data[i], ce.encode_context(model, T.Tensor(mat)).data,
                rtol=1e-5, atol=1e-6)
